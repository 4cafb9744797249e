#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "aiacycle/tensor.hpp"

namespace aiacycle {

/// Checkpoint container: a text manifest of (name, shape, byte offset)
/// entries followed by raw little-endian float32 blobs, plus named metadata
/// strings (config echo, counters, rng state). Save and load round-trip
/// bit-exactly.
struct Checkpoint {
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> meta;

    void put(const std::string& name, const Tensor& t) {
        if (!tensors.emplace(name, t).second)
            throw std::invalid_argument("checkpoint: duplicate tensor name '" + name + "'");
    }

    const Tensor& get(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        return it->second;
    }

    const std::string& meta_at(const std::string& key) const {
        auto it = meta.find(key);
        if (it == meta.end()) throw std::runtime_error("checkpoint: missing metadata '" + key + "'");
        return it->second;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
        out << "AIACYCLE-CKPT-1\n";
        out << "meta " << meta.size() << "\n";
        for (const auto& [key, value] : meta) {
            out << key << " " << value.size() << "\n";
            out.write(value.data(), static_cast<std::streamsize>(value.size()));
            out << "\n";
        }
        out << "tensors " << tensors.size() << "\n";
        std::uint64_t offset = 0;
        for (const auto& [name, t] : tensors) {
            out << name << " " << t.rank();
            for (int d : t.shape()) out << " " << d;
            out << " " << offset << "\n";
            offset += static_cast<std::uint64_t>(t.numel()) * 4;
        }
        out << "DATA\n";
        for (const auto& [name, t] : tensors) {
            static_assert(sizeof(float) == 4);
            // host is little-endian IEEE-754; bytes go out verbatim
            out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
        }
        if (!out) throw std::runtime_error("checkpoint: failed writing " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
        std::string line;
        if (!std::getline(in, line) || line != "AIACYCLE-CKPT-1")
            throw std::runtime_error("checkpoint: " + path + " has an unknown header");
        Checkpoint ck;
        std::size_t meta_count = 0;
        in >> line >> meta_count;
        if (line != "meta") throw std::runtime_error("checkpoint: malformed meta section in " + path);
        in.get();  // newline
        for (std::size_t i = 0; i < meta_count; ++i) {
            std::string key;
            std::size_t len = 0;
            in >> key >> len;
            in.get();
            std::string value(len, '\0');
            in.read(value.data(), static_cast<std::streamsize>(len));
            in.get();
            ck.meta.emplace(std::move(key), std::move(value));
        }
        std::size_t tensor_count = 0;
        in >> line >> tensor_count;
        if (line != "tensors") throw std::runtime_error("checkpoint: malformed tensor section in " + path);
        struct Entry {
            std::string name;
            Shape shape;
            std::uint64_t offset;
        };
        std::vector<Entry> entries;
        entries.reserve(tensor_count);
        for (std::size_t i = 0; i < tensor_count; ++i) {
            Entry e;
            int rank = 0;
            in >> e.name >> rank;
            e.shape.resize(static_cast<std::size_t>(rank));
            for (int d = 0; d < rank; ++d) in >> e.shape[static_cast<std::size_t>(d)];
            in >> e.offset;
            entries.push_back(std::move(e));
        }
        in.get();
        std::getline(in, line);
        if (line != "DATA") throw std::runtime_error("checkpoint: missing data marker in " + path);
        const std::streampos data_start = in.tellg();
        for (auto& e : entries) {
            Tensor t = Tensor::uninit(e.shape);
            in.seekg(data_start + static_cast<std::streamoff>(e.offset));
            in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
            if (!in) throw std::runtime_error("checkpoint: truncated data for '" + e.name + "' in " + path);
            ck.tensors.emplace(e.name, std::move(t));
        }
        return ck;
    }
};

}  // namespace aiacycle

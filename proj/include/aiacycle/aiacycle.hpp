#pragma once

// Umbrella header for the whole library.

#include "aiacycle/attention.hpp"
#include "aiacycle/autograd.hpp"
#include "aiacycle/checkpoint.hpp"
#include "aiacycle/config.hpp"
#include "aiacycle/corpus.hpp"
#include "aiacycle/enhance.hpp"
#include "aiacycle/gemm.hpp"
#include "aiacycle/gradcheck.hpp"
#include "aiacycle/layers.hpp"
#include "aiacycle/losses.hpp"
#include "aiacycle/metrics.hpp"
#include "aiacycle/models.hpp"
#include "aiacycle/optim.hpp"
#include "aiacycle/parallel.hpp"
#include "aiacycle/rng.hpp"
#include "aiacycle/signal.hpp"
#include "aiacycle/synth.hpp"
#include "aiacycle/tensor.hpp"
#include "aiacycle/training.hpp"
#include "aiacycle/wav.hpp"

// Convenience umbrella: the whole library.
#pragma once

#include "multinet/augment.hpp"
#include "multinet/bench.hpp"
#include "multinet/checkpoint.hpp"
#include "multinet/cls_decoder.hpp"
#include "multinet/commands.hpp"
#include "multinet/common.hpp"
#include "multinet/conv.hpp"
#include "multinet/data_io.hpp"
#include "multinet/det_decoder.hpp"
#include "multinet/encoder.hpp"
#include "multinet/gemm.hpp"
#include "multinet/metrics.hpp"
#include "multinet/model.hpp"
#include "multinet/ops.hpp"
#include "multinet/params.hpp"
#include "multinet/rng.hpp"
#include "multinet/roi_align.hpp"
#include "multinet/seg_decoder.hpp"
#include "multinet/tensor.hpp"
#include "multinet/training.hpp"

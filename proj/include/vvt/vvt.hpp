#pragma once

#include "vvt/agnostic_loss.hpp"
#include "vvt/ctc_attention.hpp"
#include "vvt/data_model.hpp"
#include "vvt/edm.hpp"
#include "vvt/errors.hpp"
#include "vvt/io.hpp"
#include "vvt/keyframe.hpp"
#include "vvt/metrics.hpp"
#include "vvt/nn.hpp"
#include "vvt/plot.hpp"
#include "vvt/run_config.hpp"
#include "vvt/synthetic.hpp"
#include "vvt/tensor.hpp"
#include "vvt/toy_pipeline.hpp"

#pragma once

#include "redsc/adam.hpp"
#include "redsc/array.hpp"
#include "redsc/autodiff.hpp"
#include "redsc/baselines.hpp"
#include "redsc/checkpoint.hpp"
#include "redsc/conv.hpp"
#include "redsc/data/dataset.hpp"
#include "redsc/data/idx.hpp"
#include "redsc/data/image_dir.hpp"
#include "redsc/data/synth.hpp"
#include "redsc/errors.hpp"
#include "redsc/gradcheck.hpp"
#include "redsc/hungarian.hpp"
#include "redsc/metrics.hpp"
#include "redsc/model.hpp"
#include "redsc/spectral.hpp"
#include "redsc/trainer.hpp"

#pragma once

#include "trajdiffuse/adam.hpp"
#include "trajdiffuse/checkpoint.hpp"
#include "trajdiffuse/core.hpp"
#include "trajdiffuse/dataset.hpp"
#include "trajdiffuse/denoiser.hpp"
#include "trajdiffuse/diffusion.hpp"
#include "trajdiffuse/map_io.hpp"
#include "trajdiffuse/mapguide.hpp"
#include "trajdiffuse/metrics.hpp"
#include "trajdiffuse/evaluation.hpp"
#include "trajdiffuse/pipeline.hpp"
#include "trajdiffuse/prediction_io.hpp"
#include "trajdiffuse/random.hpp"
#include "trajdiffuse/schedule.hpp"
#include "trajdiffuse/synth.hpp"

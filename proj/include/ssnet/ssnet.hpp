#pragma once

#include "ssnet/adam.hpp"
#include "ssnet/archive.hpp"
#include "ssnet/discriminator.hpp"
#include "ssnet/evaluate.hpp"
#include "ssnet/generator.hpp"
#include "ssnet/layers.hpp"
#include "ssnet/losses.hpp"
#include "ssnet/morphology.hpp"
#include "ssnet/mvol.hpp"
#include "ssnet/phantom.hpp"
#include "ssnet/run.hpp"
#include "ssnet/stats.hpp"
#include "ssnet/tensor.hpp"
#include "ssnet/training.hpp"
#include "ssnet/volume.hpp"

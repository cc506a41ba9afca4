#pragma once

#include "compass/tensor.hpp"
#include "compass/linalg.hpp"
#include "compass/parallel.hpp"
#include "compass/synthtask.hpp"
#include "compass/pipeline.hpp"
#include "compass/subspace.hpp"
#include "compass/calibrate.hpp"
#include "compass/weighted.hpp"
#include "compass/analysis.hpp"
#include "compass/io.hpp"
#include "compass/config.hpp"

#pragma once
// Umbrella header.

#include "stnltv/common.hpp"
#include "stnltv/core.hpp"
#include "stnltv/image_io.hpp"
#include "stnltv/nlweights.hpp"
#include "stnltv/operators.hpp"
#include "stnltv/pipeline.hpp"
#include "stnltv/projections.hpp"
#include "stnltv/rng.hpp"
#include "stnltv/solvers.hpp"

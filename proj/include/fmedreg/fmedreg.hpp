#pragma once

#include "fmedreg/errors.hpp"
#include "fmedreg/fda.hpp"
#include "fmedreg/kernels.hpp"
#include "fmedreg/geomedian.hpp"
#include "fmedreg/regression.hpp"
#include "fmedreg/inference.hpp"
#include "fmedreg/simulation.hpp"
#include "fmedreg/io.hpp"
#include "fmedreg/bench.hpp"

#pragma once
// Convenience umbrella: pulls in the whole calibration library.

#include "volcal/arbitrage.hpp"
#include "volcal/dual.hpp"
#include "volcal/io.hpp"
#include "volcal/kernels.hpp"
#include "volcal/marginal.hpp"
#include "volcal/numerics.hpp"
#include "volcal/parallel.hpp"
#include "volcal/pricing.hpp"
#include "volcal/prior.hpp"
#include "volcal/quotes.hpp"
#include "volcal/solver.hpp"
#include "volcal/surface.hpp"

#pragma once

// Umbrella header for the whole toolkit.

#include "avoinv/common.hpp"
#include "avoinv/config.hpp"
#include "avoinv/diagnostics.hpp"
#include "avoinv/fft.hpp"
#include "avoinv/grf.hpp"
#include "avoinv/grid.hpp"
#include "avoinv/io.hpp"
#include "avoinv/mars.hpp"
#include "avoinv/mcmc.hpp"
#include "avoinv/model.hpp"
#include "avoinv/npkr.hpp"
#include "avoinv/rng.hpp"
#include "avoinv/surrogate.hpp"

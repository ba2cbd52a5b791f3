#pragma once

// Core toolkit; the configuration and command-line layers (config.hpp,
// cli.hpp) are included separately because they need yaml-cpp.

#include "sensex/data.hpp"
#include "sensex/dynamics.hpp"
#include "sensex/errors.hpp"
#include "sensex/explore.hpp"
#include "sensex/falsify.hpp"
#include "sensex/feedforward.hpp"
#include "sensex/io.hpp"
#include "sensex/net.hpp"
#include "sensex/parallel.hpp"
#include "sensex/sim.hpp"
#include "sensex/systems.hpp"
#include "sensex/types.hpp"

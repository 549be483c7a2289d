#pragma once

// Umbrella header.

#include "spinconc/concentration.hpp"
#include "spinconc/error.hpp"
#include "spinconc/exact.hpp"
#include "spinconc/harness.hpp"
#include "spinconc/io.hpp"
#include "spinconc/mc.hpp"
#include "spinconc/model.hpp"
#include "spinconc/parallel.hpp"
#include "spinconc/replica.hpp"
#include "spinconc/replica_batch.hpp"
#include "spinconc/rng.hpp"
#include "spinconc/spin_configuration.hpp"
#include "spinconc/stats.hpp"

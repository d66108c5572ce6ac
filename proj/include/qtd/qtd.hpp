#pragma once
// Umbrella header.

#include "channel.hpp"
#include "discrimination.hpp"
#include "errors.hpp"
#include "fock.hpp"
#include "io.hpp"
#include "objective.hpp"
#include "optimize.hpp"
#include "phase.hpp"
#include "sqp.hpp"
#include "wigner.hpp"

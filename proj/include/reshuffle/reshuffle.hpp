#pragma once

#include "reshuffle/empirics.hpp"
#include "reshuffle/errors.hpp"
#include "reshuffle/format.hpp"
#include "reshuffle/gp_surface.hpp"
#include "reshuffle/parallel.hpp"
#include "reshuffle/regret.hpp"
#include "reshuffle/rng.hpp"
#include "reshuffle/splits.hpp"
#include "reshuffle/stats.hpp"
#include "reshuffle/tau.hpp"

namespace reshuffle {

inline constexpr const char* version = "0.1.0";

} // namespace reshuffle

#pragma once

#include "plso/apg.hpp"
#include "plso/bench.hpp"
#include "plso/model.hpp"
#include "plso/prox.hpp"
#include "plso/rng.hpp"
#include "plso/selection.hpp"
#include "plso/state_space.hpp"
#include "plso/types.hpp"
#include "plso/whittle.hpp"

#pragma once

#include "vaet/common.hpp"
#include "vaet/hilbert.hpp"
#include "vaet/bath.hpp"
#include "vaet/noise.hpp"
#include "vaet/observables.hpp"
#include "vaet/propagator.hpp"
#include "vaet/ratetheory.hpp"
#include "vaet/config.hpp"
#include "vaet/io.hpp"
#include "vaet/sweep.hpp"

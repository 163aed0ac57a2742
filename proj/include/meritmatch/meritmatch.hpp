#pragma once

#include "rng.hpp"
#include "csv.hpp"
#include "market.hpp"
#include "geography.hpp"
#include "mechanisms.hpp"
#include "strategy.hpp"
#include "popgen.hpp"
#include "metrics.hpp"
#include "simulate.hpp"
#include "econometrics.hpp"
#include "config.hpp"
#include "pipeline.hpp"

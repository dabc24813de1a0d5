#pragma once

#include "hetdqcd/rng.hpp"
#include "hetdqcd/models.hpp"
#include "hetdqcd/cusum.hpp"
#include "hetdqcd/fusion_spec.hpp"
#include "hetdqcd/fusion.hpp"
#include "hetdqcd/metrics.hpp"
#include "hetdqcd/calibration.hpp"
#include "hetdqcd/asymptotics.hpp"
#include "hetdqcd/tradeoff.hpp"
#include "hetdqcd/report.hpp"
#include "hetdqcd/config.hpp"
#include "hetdqcd/scenarios.hpp"

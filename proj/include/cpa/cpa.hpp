#pragma once

#include "assessment.hpp"
#include "baseline_seq.hpp"
#include "channel.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "experiments.hpp"
#include "feature_rep.hpp"
#include "metrics.hpp"
#include "mtl_net.hpp"
#include "signal_core.hpp"
#include "threat_models.hpp"
#include "training.hpp"

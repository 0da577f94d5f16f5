#pragma once

#include "opid/core.hpp"
#include "opid/cstage.hpp"
#include "opid/cv.hpp"
#include "opid/estage_ensemble.hpp"
#include "opid/estage_unified.hpp"
#include "opid/harness.hpp"
#include "opid/ingest.hpp"
#include "opid/logistic.hpp"

#pragma once

#include "mixedml/controlvariate.hpp"
#include "mixedml/coupling.hpp"
#include "mixedml/error.hpp"
#include "mixedml/exact.hpp"
#include "mixedml/ledger.hpp"
#include "mixedml/mixedpath.hpp"
#include "mixedml/mlmc.hpp"
#include "mixedml/model.hpp"
#include "mixedml/model_io.hpp"
#include "mixedml/path.hpp"
#include "mixedml/rng.hpp"
#include "mixedml/splitting.hpp"
#include "mixedml/tauleap.hpp"
#include "mixedml/report.hpp"

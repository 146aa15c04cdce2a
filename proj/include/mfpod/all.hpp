#pragma once

#include "mfpod/core.hpp"
#include "mfpod/solver.hpp"
#include "mfpod/pod.hpp"
#include "mfpod/estimator.hpp"
#include "mfpod/mfpod.hpp"
#include "mfpod/adaptive.hpp"
#include "mfpod/models.hpp"
#include "mfpod/verify.hpp"
#include "mfpod/snapshot_io.hpp"
#include "mfpod/experiment.hpp"

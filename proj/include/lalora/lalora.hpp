// Copyright (c) 2026, The lalora Authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include "lalora/accountant.hpp"
#include "lalora/diagnostics.hpp"
#include "lalora/dp_mech.hpp"
#include "lalora/errors.hpp"
#include "lalora/experiment.hpp"
#include "lalora/fedsim.hpp"
#include "lalora/lora_core.hpp"
#include "lalora/numkit/conv.hpp"
#include "lalora/numkit/linalg.hpp"
#include "lalora/numkit/matrix.hpp"
#include "lalora/numkit/rng.hpp"
#include "lalora/smoothing.hpp"
#include "lalora/tasks.hpp"
#include "lalora/theorybench.hpp"

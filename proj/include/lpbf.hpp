// SPDX-FileCopyrightText: Copyright (c) 2026 the lpbf-supportopt authors.
// SPDX-License-Identifier: Apache-2.0

// Everything except lpbf/config.hpp, which needs nlohmann/json.

#pragma once

#include "lpbf/adjoint.hpp"
#include "lpbf/analysis.hpp"
#include "lpbf/error.hpp"
#include "lpbf/fem.hpp"
#include "lpbf/geometry.hpp"
#include "lpbf/interpolation.hpp"
#include "lpbf/levelset.hpp"
#include "lpbf/materials.hpp"
#include "lpbf/optimizer.hpp"
#include "lpbf/parallel.hpp"
#include "lpbf/process.hpp"
#include "lpbf/vtk.hpp"

// Copyright 2026 The qpmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "qpmp/errors.hpp"
#include "qpmp/matrixcore.hpp"
#include "qpmp/dynamics.hpp"
#include "qpmp/fidelity.hpp"
#include "qpmp/constraints.hpp"
#include "qpmp/costate.hpp"
#include "qpmp/solver.hpp"
#include "qpmp/lambda_atom.hpp"
#include "qpmp/run_config.hpp"
#include "qpmp/cli.hpp"

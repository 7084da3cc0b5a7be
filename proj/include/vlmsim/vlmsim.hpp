// Copyright 2026 The vlmsim Authors. All Rights Reserved.
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

#include "vlmsim/arch.hpp"
#include "vlmsim/cluster.hpp"
#include "vlmsim/commands.hpp"
#include "vlmsim/comm.hpp"
#include "vlmsim/config.hpp"
#include "vlmsim/engine.hpp"
#include "vlmsim/error.hpp"
#include "vlmsim/metrics.hpp"
#include "vlmsim/schedule.hpp"
#include "vlmsim/trace.hpp"
#include "vlmsim/workload.hpp"

// Copyright 2026 The Duet Authors. All Rights Reserved.
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

#include "duet/bench.hpp"
#include "duet/channel.hpp"
#include "duet/coexec.hpp"
#include "duet/dataset.hpp"
#include "duet/error.hpp"
#include "duet/frontend.hpp"
#include "duet/graph_gen.hpp"
#include "duet/graph_runner.hpp"
#include "duet/interp.hpp"
#include "duet/natives.hpp"
#include "duet/prng.hpp"
#include "duet/tensor.hpp"
#include "duet/trace.hpp"
#include "duet/trace_graph.hpp"
#include "duet/value.hpp"

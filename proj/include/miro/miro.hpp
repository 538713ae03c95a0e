// Copyright 2026 The miro Authors. All Rights Reserved.
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

#include "miro/error.hpp"
#include "miro/io.hpp"
#include "miro/random.hpp"
#include "miro/zipf_theory.hpp"
#include "miro/zipf_estimator.hpp"
#include "miro/decoding.hpp"
#include "miro/mirostat.hpp"
#include "miro/metrics.hpp"
#include "miro/stats.hpp"
#include "miro/models/model_source.hpp"
#include "miro/models/zipf_source.hpp"
#include "miro/models/ngram_model.hpp"
#include "miro/models/replay.hpp"
#include "miro/models/stdio_client.hpp"
#include "miro/generate.hpp"
#include "miro/entropy_coder.hpp"
#include "miro/experiments.hpp"
#include "miro/version.hpp"

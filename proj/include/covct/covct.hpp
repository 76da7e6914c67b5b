//*****************************************************************************
// Copyright 2026 The covct Authors
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
//*****************************************************************************
#pragma once

// Umbrella header for the covct library.

#include "covct/aggregate.hpp"
#include "covct/archive.hpp"
#include "covct/config.hpp"
#include "covct/csv.hpp"
#include "covct/dataset.hpp"
#include "covct/error.hpp"
#include "covct/image_io.hpp"
#include "covct/metrics.hpp"
#include "covct/parallel.hpp"
#include "covct/pipeline.hpp"
#include "covct/preprocess.hpp"
#include "covct/scorer.hpp"
#include "covct/scores.hpp"
#include "covct/subprocess.hpp"
#include "covct/synth.hpp"
#include "covct/types.hpp"

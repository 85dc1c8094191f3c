// Copyright 2026 The riattn Authors.
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

#include "riattn/config.hpp"
#include "riattn/decoder.hpp"
#include "riattn/error.hpp"
#include "riattn/evaluation.hpp"
#include "riattn/formats.hpp"
#include "riattn/render.hpp"
#include "riattn/rng.hpp"
#include "riattn/synthetic.hpp"
#include "riattn/tensor.hpp"
#include "riattn/tokenizer.hpp"
#include "riattn/training.hpp"

// Copyright 2026 The pxfer Authors
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

#include "pxfer/nn/adam.hpp"
#include "pxfer/nn/array.hpp"
#include "pxfer/nn/conv.hpp"
#include "pxfer/nn/gru.hpp"
#include "pxfer/nn/init.hpp"
#include "pxfer/nn/layers.hpp"
#include "pxfer/nn/losses.hpp"
#include "pxfer/nn/norm.hpp"
#include "pxfer/nn/ops.hpp"
#include "pxfer/nn/tape.hpp"

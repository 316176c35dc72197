// Copyright 2026 The Cardfuse Authors.
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

#ifndef CARDFUSE_CARDFUSE_HPP_
#define CARDFUSE_CARDFUSE_HPP_

#include "cardfuse/checkpoint.hpp"
#include "cardfuse/embedding_store.hpp"
#include "cardfuse/error.hpp"
#include "cardfuse/fusion.hpp"
#include "cardfuse/knn.hpp"
#include "cardfuse/losses.hpp"
#include "cardfuse/mining.hpp"
#include "cardfuse/optimizer.hpp"
#include "cardfuse/random.hpp"
#include "cardfuse/report.hpp"
#include "cardfuse/tensor.hpp"
#include "cardfuse/trainer.hpp"

#endif  // CARDFUSE_CARDFUSE_HPP_

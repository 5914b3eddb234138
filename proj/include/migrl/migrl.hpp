// Copyright 2026 The migrl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MIGRL_MIGRL_HPP_
#define MIGRL_MIGRL_HPP_

#include "migrl/codeval.hpp"
#include "migrl/error.hpp"
#include "migrl/harness.hpp"
#include "migrl/policy.hpp"
#include "migrl/process.hpp"
#include "migrl/rlcore.hpp"
#include "migrl/toyenv.hpp"
#include "migrl/trainer.hpp"
#include "migrl/vocabulary.hpp"

#endif  // MIGRL_MIGRL_HPP_

/* Copyright 2026 The prune-audit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <filesystem>
#include <string>

#include "prune_audit/harness.hpp"

namespace prune_audit {

// Plan files are JSON objects with the sections dataset, model, pretrain,
// retrain, pruning and analysis. Unknown keys are rejected; every failure is
// a PlanError carrying the dotted key path.
ExperimentPlan parse_plan_text(const std::string& text);
ExperimentPlan parse_plan(const std::filesystem::path& path);

// Canonical JSON (two-space indent, trailing newline). parse(serialize(p)) == p.
std::string serialize_plan(const ExperimentPlan& plan);

}  // namespace prune_audit

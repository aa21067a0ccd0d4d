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

#include "prune_audit/train.hpp"

namespace prune_audit {

void TrainConfig::validate(bool allow_zero_epochs) const {
  if (epochs == 0 && !allow_zero_epochs) throw Error("epochs must be at least 1", true);
  if (batch_size == 0) throw Error("batch_size must be at least 1", true);
  if (momentum < 0.0 || momentum >= 1.0) throw Error("momentum must be in [0, 1)", true);
  if (weight_decay < 0.0) throw Error("weight_decay must be non-negative", true);
  if (lr_schedule.empty()) throw Error("lr_schedule is empty", true);
  if (lr_schedule.front().start_epoch != 0) throw Error("lr_schedule must start at epoch 0", true);
  for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
    if (!(lr_schedule[i].learning_rate > 0.0)) throw Error("lr_schedule rates must be positive", true);
    if (i > 0 && lr_schedule[i].start_epoch <= lr_schedule[i - 1].start_epoch) {
      throw Error("lr_schedule start epochs must be strictly increasing", true);
    }
  }
}

double lr_at(const std::vector<LrMilestone>& schedule, std::size_t epoch) {
  if (schedule.empty()) throw Error("lr_at: empty schedule", true);
  double rate = schedule.front().learning_rate;
  for (const auto& m : schedule) {
    if (m.start_epoch <= epoch) rate = m.learning_rate;
  }
  return rate;
}

}  // namespace prune_audit

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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace prune_audit {

// Base of every error thrown by the library. Validation errors are caused by
// bad inputs (plans, files, arguments); everything else is a runtime failure.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, bool validation = false)
      : std::runtime_error(what), validation_(validation) {}

  bool is_validation() const { return validation_; }

 private:
  bool validation_;
};

class ShapeError : public Error {
 public:
  ShapeError(std::size_t layer_index, const std::string& reason)
      : Error("layer " + std::to_string(layer_index) + ": " + reason, true),
        layer_index_(layer_index) {}

  std::size_t layer_index() const { return layer_index_; }

 private:
  std::size_t layer_index_;
};

class IdxError : public Error {
 public:
  enum class Kind { kIo, kWrongMagic, kTruncated, kCountMismatch, kBadDimensions, kBadLabel };

  IdxError(Kind kind, const std::string& what) : Error(what, true), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class PlanError : public Error {
 public:
  enum class Kind { kMissingKey, kTypeError, kInvalid, kUnknownKey, kSyntax };

  PlanError(Kind kind, std::string key_path, const std::string& reason)
      : Error(key_path + ": " + reason, true), kind_(kind), key_path_(std::move(key_path)) {}

  Kind kind() const { return kind_; }
  const std::string& key_path() const { return key_path_; }

 private:
  Kind kind_;
  std::string key_path_;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace prune_audit

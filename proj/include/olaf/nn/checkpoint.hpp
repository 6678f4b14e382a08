// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "olaf/core/tensor.hpp"
#include "olaf/nn/module.hpp"

namespace olaf::nn {

/// In-memory image of a model archive: a free-form JSON header plus an
/// ordered list of named tensors (parameters first, then buffers).
struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor *find(const std::string &name) const;
};

/// Captures every parameter and buffer of the module under its dotted name.
Checkpoint snapshot(Module &m, nlohmann::json meta = {});

/// Writes tensors back into the module. Every parameter and buffer of the
/// module must be present with a matching shape; extra archive entries are
/// rejected too, so a restore is always exact.
void restore(Module &m, const Checkpoint &ck);

void save_checkpoint(const std::string &path, const Checkpoint &ck);
Checkpoint load_checkpoint(const std::string &path);

} // namespace olaf::nn

// Copyright Contributors to the reflsurf Project
// SPDX-License-Identifier: Apache-2.0
//
// Trainer checkpoints: base.ply, env.ply and a binary optimizer sidecar in one
// directory per step.
//
#pragma once

#include <reflsurf/optim.hpp>

#include <optional>
#include <string>

namespace reflsurf {

std::string encodeTrainerState(const TrainerState &state);
TrainerState decodeTrainerState(const std::string &bytes, const std::string &name = "<memory>");

/// Writes `<root>/step_<NNNNNNNN>/` through a temporary directory that is
/// renamed into place once complete. Returns the final directory.
std::string saveCheckpoint(const std::string &root, const Trainer &trainer,
                           const std::string &configText = {});

/// Replaces the trainer's sets and state with the checkpoint's.
void loadCheckpoint(const std::string &dir, Trainer &trainer);

/// The complete checkpoint with the highest step under `root`, if any.
std::optional<std::string> latestCheckpoint(const std::string &root);

} // namespace reflsurf

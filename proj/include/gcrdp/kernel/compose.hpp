// Copyright 2026 The gcrdp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small helpers built only from Tape primitives.

#pragma once

#include <cstddef>
#include <span>

#include "gcrdp/kernel/tape.hpp"

namespace gcrdp::kernel {

// Rows of `matrix` in the given order, as a matmul with a constant one-hot
// selector.
NodeId gather_rows(Tape& tape, NodeId matrix, std::span<const std::size_t> rows);

// Mean over every entry.
NodeId mean(Tape& tape, NodeId a);

}  // namespace gcrdp::kernel

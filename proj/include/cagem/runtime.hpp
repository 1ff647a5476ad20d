// Copyright (c) 2026, the cagem authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace cagem {

/// Keeps large freed blocks in the heap instead of returning them to the
/// kernel. Training allocates and frees many equally sized activation
/// matrices per step; without this glibc maps and unmaps them every time.
/// No effect on other C libraries.
void configure_allocator();

}  // namespace cagem

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stepcount {

// 64-bit FNV-1a; used for config hashes and artifact fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string hex64(std::uint64_t value);

// Derives an independent stream seed from a base seed and a list of indices.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Worker count from STEPCOUNT_WORKERS, at least 1.
unsigned worker_count();

// Keeps large freed blocks in the heap instead of returning them to the OS.
// Training frees and reallocates the same activation sizes every batch, and
// fresh pages cost more than the arithmetic. No-op outside glibc.
void retain_freed_memory();

}  // namespace stepcount

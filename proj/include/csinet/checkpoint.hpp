#pragma once

// Parameter checkpoint files: a line-oriented text manifest followed by one
// raw blob of little-endian 32-bit floats. Exact layout:
//
//   csinet-checkpoint v1\n
//   config <single-line-of-text>\n        (zero or one line)
//   tensor <name> <rank> <d0> ... <d{rank-1}> <byte-offset>\n   (per tensor)
//   blob <total-blob-bytes>\n
//   <blob: the tensors' values back to back, row-major, LE float32>
//
// Tensor names contain no whitespace. Offsets are relative to the start of
// the blob and must be contiguous in manifest order, so files round-trip
// bit-for-bit.

#include <string>
#include <vector>

#include "csinet/tensor.hpp"

namespace csinet::ckpt {

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    std::string config_text;  // single line, empty = absent
    std::vector<NamedTensor> tensors;

    const Tensor* find(const std::string& name) const;
};

// Throws UsageError on invalid names/config, DataError when the file cannot
// be opened for writing.
void write_checkpoint(const std::string& path, const Checkpoint& c);

// Throws DataError when the file cannot be opened, FormatError (with byte
// offset) on any structural problem.
Checkpoint read_checkpoint(const std::string& path);

}  // namespace csinet::ckpt

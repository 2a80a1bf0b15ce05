#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "netrecast/network.hpp"

namespace netrecast {

// Blob file layout:
//
//   8 bytes   magic "NRBLOB\r\n"
//   u32 LE    format version (1)
//   u32 LE    header length in bytes
//   header    UTF-8 text lines:
//               kind <word>
//               <free meta lines>
//               tensor <name> <rank> <d0> ... <dn-1>
//               end
//   payload   float32 little-endian values of each tensor in header order
//
// Nothing may follow the payload. Checkpoints (kind "network") carry the
// architecture as "arch ..." meta lines; the raw-tensor dataset format uses
// the same container with kind "dataset".
inline constexpr std::uint32_t kBlobVersion = 1;

struct BlobFile {
  std::string kind;
  std::vector<std::string> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>& tensor(const std::string& name) const;
};

// Throws FormatError (bad magic, malformed header, trailing bytes),
// VersionError or TruncatedError.
BlobFile read_blob_file(const std::string& path);
void write_blob_file(const std::string& path, const BlobFile& blob);

// Header-only variants for tests that need to tamper with a file.
std::string encode_blob(const BlobFile& blob);
BlobFile decode_blob(const std::string& bytes);

// Stores spec, every parameter and every BN running statistic.
void save_checkpoint(const Network& net, const std::string& path);
std::string encode_checkpoint(const Network& net);

// Rebuilds the network from the stored architecture and fills its tensors.
// A stored tensor whose shape disagrees with the architecture raises
// ShapeMismatchError naming it; missing or unknown tensors raise
// FormatError. No partially loaded network is ever returned.
Network load_checkpoint(const std::string& path);
Network decode_checkpoint(const std::string& bytes);

}  // namespace netrecast

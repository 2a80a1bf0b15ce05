#include "netrecast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace netrecast {

namespace {

constexpr char kMagic[8] = {'N', 'R', 'B', 'L', 'O', 'B', '\r', '\n'};
constexpr std::size_t kPreamble = 16;

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void append_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void append_f32_le(std::string& out, std::span<const float> values) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 4);
  char* dst = out.data() + start;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, values.data(), values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(values[i]);
      for (int b = 0; b < 4; ++b) dst[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
}

void read_f32_le(const unsigned char* src, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(values.data(), src, values.size() * 4);
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::bit_cast<float>(read_u32_le(src + 4 * i));
  }
}

struct Header {
  std::string kind;
  std::vector<std::string> meta;
  std::vector<std::pair<std::string, Shape>> tensors;
  std::size_t payload_offset = 0;
};

Header decode_header(const std::string& bytes) {
  const auto* u = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a netrecast blob file (bad magic)");
  }
  if (bytes.size() < kPreamble) throw TruncatedError("file ends inside the preamble");
  const std::uint32_t version = read_u32_le(u + 8);
  if (version != kBlobVersion) {
    throw VersionError("unsupported blob version " + std::to_string(version) + " (expected " +
                       std::to_string(kBlobVersion) + ")");
  }
  const std::uint32_t header_len = read_u32_le(u + 12);
  if (bytes.size() < kPreamble + header_len) throw TruncatedError("file ends inside the header");

  Header h;
  h.payload_offset = kPreamble + header_len;
  std::istringstream in(bytes.substr(kPreamble, header_len));
  std::string line;
  bool ended = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (ended) throw FormatError("header has content after 'end'");
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (line_no == 1) {
      if (word != "kind" || !(ls >> h.kind)) throw FormatError("header must start with 'kind <name>'");
    } else if (word == "tensor") {
      std::string name;
      std::size_t rank = 0;
      if (!(ls >> name >> rank)) throw FormatError("malformed tensor line " + std::to_string(line_no));
      Shape shape(rank);
      for (auto& d : shape) {
        if (!(ls >> d) || d < 0) throw FormatError("malformed extent for tensor '" + name + "'");
      }
      h.tensors.emplace_back(std::move(name), std::move(shape));
    } else if (word == "end") {
      ended = true;
    } else {
      h.meta.push_back(line);
    }
  }
  if (!ended) throw FormatError("header is missing its 'end' line");
  return h;
}

std::size_t payload_bytes(const Header& h) {
  std::size_t n = 0;
  for (const auto& [name, shape] : h.tensors) n += static_cast<std::size_t>(shape_numel(shape)) * 4;
  return n;
}

void check_payload_size(const Header& h, std::size_t file_size) {
  const std::size_t need = h.payload_offset + payload_bytes(h);
  if (file_size < need) {
    throw TruncatedError("payload truncated: need " + std::to_string(need) + " bytes, file has " +
                         std::to_string(file_size));
  }
  if (file_size > need) {
    throw FormatError(std::to_string(file_size - need) + " unexpected trailing bytes after payload");
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed for '" + path + "'");
}

}  // namespace

const Tensor<float>& BlobFile::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("blob has no tensor named '" + name + "'");
}

std::string encode_blob(const BlobFile& blob) {
  std::ostringstream header;
  header << "kind " << blob.kind << '\n';
  for (const auto& m : blob.meta) header << m << '\n';
  for (const auto& [name, t] : blob.tensors) {
    header << "tensor " << name << ' ' << t.ndim();
    for (auto d : t.shape()) header << ' ' << d;
    header << '\n';
  }
  header << "end\n";
  const std::string text = header.str();

  std::string out(kMagic, sizeof(kMagic));
  append_u32_le(out, kBlobVersion);
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& [name, t] : blob.tensors) append_f32_le(out, t.data());
  return out;
}

BlobFile decode_blob(const std::string& bytes) {
  const Header h = decode_header(bytes);
  check_payload_size(h, bytes.size());
  BlobFile blob{h.kind, h.meta, {}};
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
  for (const auto& [name, shape] : h.tensors) {
    Tensor<float> t(shape);
    read_f32_le(p, t.mutable_data());
    p += t.numel() * 4;
    blob.tensors.emplace_back(name, std::move(t));
  }
  return blob;
}

BlobFile read_blob_file(const std::string& path) { return decode_blob(read_file(path)); }

void write_blob_file(const std::string& path, const BlobFile& blob) { write_file(path, encode_blob(blob)); }

std::string encode_checkpoint(const Network& net) {
  BlobFile blob;
  blob.kind = "network";
  std::istringstream arch(format_arch_spec(net.spec()));
  for (std::string line; std::getline(arch, line);) blob.meta.push_back("arch " + line);
  for (const auto& e : net.parameters()) blob.tensors.emplace_back(e.name, e.value);
  for (const auto& e : net.buffers()) blob.tensors.emplace_back(e.name, e.value);
  return encode_blob(blob);
}

void save_checkpoint(const Network& net, const std::string& path) { write_file(path, encode_checkpoint(net)); }

Network decode_checkpoint(const std::string& bytes) {
  const Header h = decode_header(bytes);
  if (h.kind != "network") throw FormatError("blob kind '" + h.kind + "' is not a network checkpoint");
  std::string arch;
  for (const auto& m : h.meta) {
    if (m.rfind("arch ", 0) == 0) arch += m.substr(5) + '\n';
  }
  NetworkSpec spec;
  try {
    spec = parse_arch_spec(arch);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint architecture is invalid: ") + e.what());
  }
  Network net(spec, 0);

  std::map<std::string, Tensor<float>> slots;
  for (auto& e : net.parameters()) slots.emplace(e.name, e.value);
  for (auto& e : net.buffers()) slots.emplace(e.name, e.value);
  for (const auto& [name, shape] : h.tensors) {
    auto it = slots.find(name);
    if (it == slots.end()) throw FormatError("checkpoint tensor '" + name + "' does not belong to the architecture");
    if (it->second.shape() != shape) {
      throw ShapeMismatchError(name, "tensor '" + name + "' stored as " + shape_str(shape) +
                                         " but the architecture expects " + shape_str(it->second.shape()));
    }
  }
  if (h.tensors.size() != slots.size()) {
    for (const auto& [name, t] : slots) {
      bool found = false;
      for (const auto& stored : h.tensors) found = found || stored.first == name;
      if (!found) throw FormatError("checkpoint is missing tensor '" + name + "'");
    }
    throw FormatError("checkpoint stores a tensor more than once");
  }
  check_payload_size(h, bytes.size());

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.payload_offset;
  for (const auto& [name, shape] : h.tensors) {
    auto& t = slots.at(name);
    read_f32_le(p, t.mutable_data());
    p += t.numel() * 4;
  }
  return net;
}

Network load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace netrecast

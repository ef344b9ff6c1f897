#include "faceswap/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace faceswap::ckpt {

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::ifstream& in, T* v) {
  in.read(reinterpret_cast<char*>(v), sizeof(T));
  return in.gcount() == sizeof(T);
}

[[noreturn]] void corrupt(const std::string& path, const std::string& why) {
  fail(ErrorCode::corrupt_checkpoint,
       "corrupt checkpoint '" + path + "': " + why);
}

}  // namespace

void write_container(const std::string& path, const nlohmann::json& manifest,
                     const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io_error, "cannot write checkpoint '" + path + "'");
  std::string m = manifest.dump();  // object keys serialize sorted
  write_pod<uint64_t>(out, m.size());
  out.write(m.data(), static_cast<std::streamsize>(m.size()));
  for (const auto& nt : tensors) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(nt.tensor.rank()));
    for (int64_t d = 0; d < nt.tensor.rank(); ++d)
      write_pod<uint64_t>(out, static_cast<uint64_t>(nt.tensor.dim(d)));
    std::vector<float> buf(static_cast<size_t>(nt.tensor.size()));
    for (int64_t i = 0; i < nt.tensor.size(); ++i)
      buf[static_cast<size_t>(i)] = static_cast<float>(nt.tensor[i]);
    write_pod<uint64_t>(out, buf.size() * sizeof(float));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  require(out.good(), ErrorCode::io_error, "short write to checkpoint '" + path + "'");
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io_error, "cannot open checkpoint '" + path + "'");
  uint64_t mlen = 0;
  if (!read_pod(in, &mlen)) corrupt(path, "missing manifest length");
  if (mlen == 0 || mlen > (1ull << 30)) corrupt(path, "implausible manifest length");
  std::string m(mlen, '\0');
  in.read(m.data(), static_cast<std::streamsize>(mlen));
  if (in.gcount() != static_cast<std::streamsize>(mlen))
    corrupt(path, "truncated manifest");
  Container c;
  try {
    c.manifest = nlohmann::json::parse(m);
  } catch (const nlohmann::json::exception& e) {
    corrupt(path, std::string("manifest is not valid JSON: ") + e.what());
  }
  while (true) {
    uint32_t nlen = 0;
    in.read(reinterpret_cast<char*>(&nlen), sizeof(nlen));
    if (in.gcount() == 0) break;  // clean EOF
    if (in.gcount() != sizeof(nlen)) corrupt(path, "truncated tensor header");
    if (nlen == 0 || nlen > 4096) corrupt(path, "implausible tensor name length");
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    if (in.gcount() != static_cast<std::streamsize>(nlen))
      corrupt(path, "truncated tensor name");
    uint32_t rank = 0;
    if (!read_pod(in, &rank) || rank == 0 || rank > 8)
      corrupt(path, "bad tensor rank for '" + name + "'");
    ag::Shape shape(rank);
    int64_t count = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint64_t dim = 0;
      if (!read_pod(in, &dim) || dim == 0 || dim > (1ull << 32))
        corrupt(path, "bad tensor dims for '" + name + "'");
      shape[d] = static_cast<int64_t>(dim);
      count *= shape[d];
    }
    uint64_t blen = 0;
    if (!read_pod(in, &blen)) corrupt(path, "missing payload length for '" + name + "'");
    if (blen != static_cast<uint64_t>(count) * sizeof(float))
      corrupt(path, "payload length mismatch for '" + name + "'");
    std::vector<float> buf(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(blen));
    if (in.gcount() != static_cast<std::streamsize>(blen))
      corrupt(path, "truncated payload for '" + name + "'");
    ag::Tensor t(shape);
    for (int64_t i = 0; i < count; ++i) t[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
    c.tensors.push_back({std::move(name), std::move(t)});
  }
  return c;
}

}  // namespace faceswap::ckpt

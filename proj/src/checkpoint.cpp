#include "ipn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ipn/errors.hpp"
#include "ipn/png_io.hpp"

namespace ipn::nets {

namespace {

constexpr char kMagic[8] = {'I', 'P', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(IpnModel& model, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
  nlohmann::json header;
  header["config"] = to_json(meta.config);
  header["seed"] = meta.seed;
  header["iteration"] = meta.iteration;
  header["extra"] = meta.extra;
  header["tensors"] = nlohmann::json::array();

  std::vector<torch::Tensor> blobs;
  std::uint64_t offset = 0;
  for (const auto& item : model->named_parameters()) {
    auto t = item.value().detach().to(torch::kCPU, torch::kFloat32).contiguous();
    const std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
    header["tensors"].push_back({{"name", item.key()},
                                 {"shape", t.sizes().vec()},
                                 {"dtype", "float32"},
                                 {"offset", offset},
                                 {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(std::move(t));
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& t : blobs) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data_ptr<float>());
    out.insert(out.end(), p, p + t.numel() * sizeof(float));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png::write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto in = png::read_file(path);
  if (in.size() < sizeof(kMagic) || std::memcmp(in.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(in, pos);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(in, pos);
  if (pos + header_len > in.size()) throw IoError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos),
                                   in.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;
  const std::size_t data_start = pos;

  Checkpoint ck;
  ck.meta.config = model_config_from_json(header.at("config"));
  ck.meta.seed = header.at("seed").get<std::uint64_t>();
  ck.meta.iteration = header.at("iteration").get<long>();
  ck.meta.extra = header.value("extra", nlohmann::json::object());
  ck.model = IpnModel(ck.meta.config);

  auto params = ck.model->named_parameters();
  std::size_t loaded = 0;
  torch::NoGradGuard no_grad;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    auto* target = params.find(name);
    if (target == nullptr) throw IoError("checkpoint has unknown tensor " + name);
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (target->sizes().vec() != shape) throw IoError("checkpoint shape mismatch for " + name);
    const auto off = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(target->numel()) * sizeof(float) ||
        data_start + off + nbytes > in.size()) {
      throw IoError("checkpoint data truncated for " + name);
    }
    auto src = torch::empty(shape, torch::kFloat32);
    std::memcpy(src.data_ptr<float>(), in.data() + data_start + off, nbytes);
    target->copy_(src);
    ++loaded;
  }
  if (loaded != params.size()) throw IoError("checkpoint is missing parameters");
  ck.model->eval();
  return ck;
}

}  // namespace ipn::nets

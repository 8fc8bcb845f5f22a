#include "patchgen/core/io.hpp"
#include "patchgen/train/trainer.hpp"

#include <sstream>

namespace patchgen::train {

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'G', 'C', 'K'};
constexpr std::uint8_t kCheckpointVersion = 1;

nlohmann::json store_manifest(const char* name, const nn::ParameterStore& store, std::size_t& offset) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : store.entries()) {
    entries.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}, {"offset", offset}});
    offset += 3 * e.size();
  }
  return {{"name", name}, {"step", store.step()}, {"entries", entries}};
}

void append_store(std::vector<std::uint8_t>& out, const nn::ParameterStore& store) {
  for (const auto& e : store.entries()) {
    for (const auto* arr : {&e.value, &e.m, &e.v}) {
      for (float f : *arr) io::put_f32(out, f);
    }
  }
}

void restore_store(const nlohmann::json& manifest, nn::ParameterStore& store, io::ByteReader& blob,
                   std::size_t blob_start) {
  const auto& entries = manifest.at("entries");
  if (entries.size() != store.size()) {
    throw FormatError("checkpoint store '" + manifest.at("name").get<std::string>() + "' lists " +
                      std::to_string(entries.size()) + " arrays, the model has " + std::to_string(store.size()));
  }
  store.set_step(manifest.at("step").get<std::uint64_t>());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& m = entries[i];
    const auto name = m.at("name").get<std::string>();
    auto& e = store.entry(i);
    if (name != e.name || m.at("rows").get<Eigen::Index>() != e.rows || m.at("cols").get<Eigen::Index>() != e.cols) {
      throw FormatError("checkpoint array '" + name + "' does not match model array '" + e.name + "'");
    }
    const std::size_t offset = blob_start + 4 * m.at("offset").get<std::size_t>();
    if (blob.offset() != offset) throw FormatError("checkpoint array '" + name + "' has an inconsistent offset");
    for (auto* arr : {&e.value, &e.m, &e.v}) {
      for (auto& f : *arr) {
        if (blob.remaining() < 4) throw FormatError("checkpoint blob truncated in array '" + name + "'");
        f = blob.f32();
      }
    }
  }
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  std::size_t offset = 0;
  nlohmann::json manifest;
  manifest["epoch"] = epoch_;
  manifest["dtype"] = "f32le";
  manifest["layout"] = "value,m,v per array";
  manifest["config"] = config_to_json(cfg_);
  std::ostringstream rng;
  rng << rng_;
  manifest["rng_state"] = rng.str();
  manifest["probe_z"] = std::vector<double>(probe_.z.data(), probe_.z.data() + probe_.z.size());
  manifest["stores"] = {store_manifest("generator", nets_.gen_store, offset),
                        store_manifest("critic", nets_.critic_store, offset)};
  manifest["blob_floats"] = offset;
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  io::put_u8(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  append_store(out, nets_.gen_store);
  append_store(out, nets_.critic_store);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_file_bytes(path, out);
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file_bytes(path);
  io::ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  const std::uint8_t version = r.u8();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t len = r.u32();
  if (r.remaining() < len) throw FormatError("checkpoint manifest truncated at byte offset " + std::to_string(r.offset()));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(r.offset()),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(r.offset() + len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  r.take(len);
  try {
    Trainer t(config_from_json(manifest.at("config")));
    const std::size_t blob_start = r.offset();
    const auto blob_floats = manifest.at("blob_floats").get<std::size_t>();
    const auto& stores = manifest.at("stores");
    if (stores.size() != 2) throw FormatError("checkpoint must hold generator and critic stores");
    restore_store(stores[0], t.nets_.gen_store, r, blob_start);
    restore_store(stores[1], t.nets_.critic_store, r, blob_start);
    if (r.offset() != blob_start + 4 * blob_floats || r.remaining() != 0) {
      throw FormatError("checkpoint blob size does not match its manifest");
    }
    t.epoch_ = manifest.at("epoch").get<int>();
    std::istringstream rng(manifest.at("rng_state").get<std::string>());
    rng >> t.rng_;
    if (rng.fail()) throw FormatError("checkpoint rng state is malformed");
    const auto z = manifest.at("probe_z").get<std::vector<double>>();
    t.probe_.z = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is malformed: ") + e.what());
  }
}

}  // namespace patchgen::train

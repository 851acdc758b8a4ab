#include "repforge/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "repforge/version.hpp"

namespace repforge {

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("digest: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) {
    const std::streamsize n = f.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

std::string hex_u64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string manifest_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["toolkit"] = "repforge";
  j["version"] = kVersion;
  j["data_path"] = m.data_path;
  j["data_digest_fnv1a64"] = m.data_digest;
  j["layout"] = m.layout;
  j["disjoint_conv1"] = m.disjoint_conv1;
  j["depth"] = m.depth;
  j["num_classes"] = m.num_classes;
  j["epochs"] = m.epochs;
  j["batch_size"] = m.batch_size;
  j["lr"] = m.lr;
  j["test_fraction"] = m.test_fraction;
  j["dropout_keep"] = m.dropout_keep;
  j["dropout_on_conv"] = m.dropout_on_conv;
  j["standardize_mode"] = m.standardize_mode;
  j["seed"] = m.seed;
  j["eval_every"] = m.eval_every;
  return j.dump(2);
}

void write_manifest(const RunManifest& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << manifest_json(m) << '\n';
}

}  // namespace repforge

#include "selfqa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace selfqa {

void save_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& manifest_path,
                     const std::string& blob_path) {
  nlohmann::json manifest = nlohmann::json::array();
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("checkpoint: cannot open " + blob_path);
  std::size_t offset = 0;
  for (const Parameter* p : params) {
    manifest.push_back({{"name", p->name},
                        {"shape", p->value.shape},
                        {"dtype", "f64"},
                        {"offset", offset}});
    // doubles are written little-endian; this targets little-endian hosts
    blob.write(reinterpret_cast<const char*>(p->value.data.data()),
               std::streamsize(p->value.size() * sizeof(double)));
    offset += p->value.size() * sizeof(double);
  }
  std::ofstream mf(manifest_path);
  if (!mf) throw std::runtime_error("checkpoint: cannot open " + manifest_path);
  mf << manifest.dump(2) << '\n';
}

void load_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& manifest_path,
                     const std::string& blob_path) {
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("checkpoint: cannot open " + manifest_path);
  nlohmann::json manifest = nlohmann::json::parse(mf);
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("checkpoint: cannot open " + blob_path);

  std::map<std::string, std::pair<std::vector<std::size_t>, std::size_t>> entries;
  for (const auto& e : manifest) {
    if (e.at("dtype").get<std::string>() != "f64")
      throw std::runtime_error("checkpoint: unsupported dtype");
    entries[e.at("name").get<std::string>()] = {
        e.at("shape").get<std::vector<std::size_t>>(),
        e.at("offset").get<std::size_t>()};
  }
  for (Parameter* p : params) {
    auto it = entries.find(p->name);
    if (it == entries.end())
      throw std::runtime_error("checkpoint: missing parameter " + p->name);
    if (it->second.first != p->value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
    blob.seekg(std::streamoff(it->second.second));
    blob.read(reinterpret_cast<char*>(p->value.data.data()),
              std::streamsize(p->value.size() * sizeof(double)));
    if (!blob) throw std::runtime_error("checkpoint: short read for " + p->name);
  }
}

}  // namespace selfqa

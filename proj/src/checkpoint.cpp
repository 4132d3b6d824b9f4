#include "tet/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace tet {

using nlohmann::ordered_json;
using Kind = CheckpointError::Kind;

namespace {

constexpr std::array<char, 4> kMagic{'T', 'E', 'T', 'C'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

void write_blob(std::ostream& out, const Tensor<float>& t) {
  const auto d = t.data();
  out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
}

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CheckpointError(Kind::truncated, "checkpoint truncated: " + path_.string());
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    read(&v, 4);
    return v;
  }

  void blob(Tensor<float>& t) {
    auto d = t.data();
    read(d.data(), d.size() * sizeof(float));
  }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
};

ordered_json shape_json(const Shape& s) { return ordered_json(std::vector<std::size_t>(s.begin(), s.end())); }

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  ordered_json meta;
  meta["config"] = ordered_json::parse(ck.config.to_json());
  meta["shape"] = {{"entities", ck.shape.entities},
                   {"relations", ck.shape.relations},
                   {"types", ck.shape.types},
                   {"first_class_relation", ck.shape.first_class_relation}};
  meta["fingerprints"] = {{"entities", ck.entity_fingerprint},
                          {"relations", ck.relation_fingerprint},
                          {"types", ck.type_fingerprint}};
  meta["best_mrr"] = std::isnan(ck.best_mrr) ? ordered_json(nullptr) : ordered_json(ck.best_mrr);
  meta["best_epoch"] = ck.best_epoch;
  meta["adam"] = {{"beta1", ck.optimizer.beta1},
                  {"beta2", ck.optimizer.beta2},
                  {"eps", ck.optimizer.eps},
                  {"step", ck.optimizer.step}};
  ordered_json params = ordered_json::array();
  for (std::size_t i = 0; i < ck.params.size(); ++i)
    params.push_back({{"name", ck.params.name(i)}, {"shape", shape_json(ck.params.value(i).shape())}});
  meta["parameters"] = params;
  const bool has_moments = ck.optimizer.m.size() == ck.params.size();
  meta["moments"] = has_moments;
  const std::string text = meta.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::io, "cannot write checkpoint: " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    write_u32(out, Checkpoint::kVersion);
    write_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : ck.params) write_blob(out, e.value);
    if (has_moments) {
      for (const auto& m : ck.optimizer.m) write_blob(out, m);
      for (const auto& v : ck.optimizer.v) write_blob(out, v);
    }
    if (!out) throw CheckpointError(Kind::io, "failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(Kind::io, "cannot move checkpoint into place: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint: " + path.string());
  Reader rd(in, path);

  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != 4 || magic != kMagic)
    throw CheckpointError(Kind::not_a_checkpoint, "not a checkpoint file: " + path.string());
  const std::uint32_t version = rd.u32();
  if (version != Checkpoint::kVersion)
    throw CheckpointError(Kind::version_mismatch, "checkpoint version " + std::to_string(version) +
                                                      " is not supported (expected " +
                                                      std::to_string(Checkpoint::kVersion) + ")");
  const std::uint32_t len = rd.u32();
  std::string text(len, '\0');
  rd.read(text.data(), len);

  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> layout;
  bool has_moments = false;
  try {
    const auto meta = ordered_json::parse(text);
    ck.config = TrainConfig::from_json(meta.at("config").dump());
    const auto& s = meta.at("shape");
    ck.shape = {s.at("entities"), s.at("relations"), s.at("types"), s.at("first_class_relation")};
    const auto& f = meta.at("fingerprints");
    ck.entity_fingerprint = f.at("entities");
    ck.relation_fingerprint = f.at("relations");
    ck.type_fingerprint = f.at("types");
    if (!meta.at("best_mrr").is_null()) ck.best_mrr = meta.at("best_mrr");
    ck.best_epoch = meta.at("best_epoch");
    const auto& a = meta.at("adam");
    ck.optimizer.beta1 = a.at("beta1");
    ck.optimizer.beta2 = a.at("beta2");
    ck.optimizer.eps = a.at("eps");
    ck.optimizer.step = a.at("step");
    for (const auto& p : meta.at("parameters")) {
      const auto dims = p.at("shape").get<std::vector<std::size_t>>();
      if (dims.empty() || dims.size() > 2) throw ArgumentError("bad parameter rank");
      layout.emplace_back(p.at("name").get<std::string>(), Shape(dims.begin(), dims.end()));
    }
    has_moments = meta.at("moments");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::malformed, "malformed checkpoint metadata: " + std::string(e.what()));
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(Kind::malformed, "malformed checkpoint metadata: " + std::string(e.what()));
  }

  for (const auto& [name, shape] : layout) {
    Tensor<float> t(shape);
    rd.blob(t);
    ck.params.add(name, std::move(t));
  }
  if (has_moments) {
    for (auto* moments : {&ck.optimizer.m, &ck.optimizer.v})
      for (const auto& [name, shape] : layout) {
        Tensor<float> t(shape);
        rd.blob(t);
        moments->push_back(std::move(t));
      }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw CheckpointError(Kind::malformed, "trailing bytes after checkpoint payload: " + path.string());
  return ck;
}

void check_vocab(const Checkpoint& ck, const KnowledgeGraph& kg) {
  auto check = [](std::uint64_t want, std::uint64_t got, const char* what) {
    if (want != got)
      throw CheckpointError(Kind::fingerprint_mismatch,
                            std::string("checkpoint ") + what + " vocabulary differs from the dataset");
  };
  check(ck.entity_fingerprint, kg.vocab.entities.fingerprint(), "entity");
  check(ck.relation_fingerprint, kg.vocab.relations.fingerprint(), "relation");
  check(ck.type_fingerprint, kg.vocab.types.fingerprint(), "type");
}

}  // namespace tet

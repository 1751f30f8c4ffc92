#include "medrank/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace medrank {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'M', 'I', 'M', '1'};
// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxParams = std::uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void reals(const std::vector<double>& v) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::ifstream& in) : in_(in) {}
  std::uint64_t u64() {
    std::uint64_t v = 0;
    read(&v, sizeof v);
    return v;
  }
  std::vector<double> reals(std::size_t n) {
    std::vector<double> v(n);
    read(v.data(), n * sizeof(double));
    return v;
  }

 private:
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw CheckpointError("checkpoint truncated");
  }
  std::ifstream& in_;
};

ConvTower read_shape(Reader& r) {
  ConvTower t;
  t.dim = r.u64();
  t.filters = r.u64();
  t.window = r.u64();
  if (t.dim == 0 || t.filters == 0 || t.window == 0 ||
      t.dim * t.filters * t.window > kMaxParams) {
    throw CheckpointError("checkpoint has an invalid tower shape");
  }
  return t;
}

}  // namespace

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  model.validate();
  if (!model.query_table || !model.candidate_table) {
    throw CheckpointError("model has no embedding tables bound");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  Writer w(out);
  for (const ConvTower* t : {&model.query_tower, &model.candidate_tower}) {
    w.u64(t->dim);
    w.u64(t->filters);
    w.u64(t->window);
  }
  for (const ConvTower* t : {&model.query_tower, &model.candidate_tower}) {
    w.reals(t->weights);
    w.reals(t->biases);
  }
  w.u64(model.query_table->content_hash());
  w.u64(model.candidate_table->content_hash());
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path,
                            std::shared_ptr<const EmbeddingTable> query_table,
                            std::shared_ptr<const EmbeddingTable> candidate_table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[4] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a MIM1 checkpoint");
  }
  Reader r(in);
  ModelParams model;
  model.query_tower = read_shape(r);
  model.candidate_tower = read_shape(r);
  for (ConvTower* t : {&model.query_tower, &model.candidate_tower}) {
    t->weights = r.reals(t->filters * t->window * t->dim);
    t->biases = r.reals(t->filters);
  }
  const std::uint64_t query_hash = r.u64();
  const std::uint64_t candidate_hash = r.u64();
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after checkpoint payload");
  }
  if (!query_table || !candidate_table) {
    throw CheckpointError("embedding tables are required to load a checkpoint");
  }
  if (query_table->content_hash() != query_hash) {
    throw CheckpointError("query embeddings differ from the ones the checkpoint was trained with");
  }
  if (candidate_table->content_hash() != candidate_hash) {
    throw CheckpointError(
        "candidate embeddings differ from the ones the checkpoint was trained with");
  }
  model.query_table = std::move(query_table);
  model.candidate_table = std::move(candidate_table);
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
  return model;
}

}  // namespace medrank

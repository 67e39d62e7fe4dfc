#include "slicevlp/trainer/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "slicevlp/error.hpp"

namespace slicevlp::train {

namespace {

using diff::Param;
using diff::Tensor;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void bytes(std::string_view s) { out_.append(s); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.data()) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view in, std::string what) : in_(in), what_(std::move(what)) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(take(n));
  }
  std::string_view take(std::uint64_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank > 8) fail("tensor rank " + std::to_string(rank) + " is implausible");
    diff::Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = u64();
      if (d != 0 && count > (in_.size() - pos_) / d) fail("tensor larger than remaining payload");
      count *= d;
    }
    need(count * 8);
    std::vector<double> data(count);
    for (auto& v : data) v = f64();
    return Tensor(shape, std::move(data));
  }
  bool done() const { return pos_ == in_.size(); }
  [[noreturn]] void fail(const std::string& msg) const { throw LoadError("checkpoint " + what_ + ": " + msg); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) fail("truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
  std::string what_;
};

void write_params(Writer& w, const std::vector<const Param*>& params) {
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    w.str(p->name);
    w.u8(p->trainable ? 1 : 0);
    w.tensor(p->value);
  }
}

std::vector<Param> read_params(Reader& r) {
  const std::uint32_t n = r.u32();
  std::vector<Param> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const bool trainable = r.u8() != 0;
    Tensor value = r.tensor();
    out.emplace_back(std::move(name), std::move(value), trainable);
  }
  return out;
}

std::vector<const Param*> const_view(const std::vector<Param>& ps) {
  std::vector<const Param*> out;
  for (const auto& p : ps) out.push_back(&p);
  return out;
}

Param take_param(std::map<std::string, Param>& pool, const std::string& name, const diff::Shape& shape,
                 Reader& r) {
  auto it = pool.find(name);
  if (it == pool.end()) r.fail("missing parameter " + name);
  if (it->second.value.shape() != shape) {
    r.fail("parameter " + name + " has shape " + diff::shape_str(it->second.value.shape()) + ", expected " +
           diff::shape_str(shape));
  }
  Param p = std::move(it->second);
  pool.erase(it);
  return p;
}

std::map<std::string, Param> by_name(std::vector<Param> ps, Reader& r) {
  std::map<std::string, Param> out;
  for (auto& p : ps) {
    std::string name = p.name;
    if (!out.emplace(name, std::move(p)).second) r.fail("duplicate parameter " + name);
  }
  return out;
}

void require_empty(const std::map<std::string, Param>& pool, Reader& r) {
  if (!pool.empty()) r.fail("unexpected parameter " + pool.begin()->first);
}

enc::TextEncoderParams read_text(Reader& r, const TrainConfig& c, std::uint64_t seed) {
  auto pool = by_name(read_params(r), r);
  enc::TextEncoderParams t;
  t.embed_table = take_param(pool, "text.embed_table", {c.vocab, c.d_text}, r);
  t.proj = take_param(pool, "text.proj", {c.d_text, c.d_model}, r);
  t.seed = seed;
  require_empty(pool, r);
  return t;
}

enc::ImageEncoderParams read_image(Reader& r, const TrainConfig& c) {
  auto pool = by_name(read_params(r), r);
  enc::ImageEncoderParams p;
  p.patch = c.patch;
  p.patch_proj = take_param(pool, "image.patch_proj", {c.patch * c.patch, c.d_hidden}, r);
  p.mlp_hidden = take_param(pool, "image.mlp_hidden", {c.d_hidden, c.d_hidden}, r);
  p.out_proj = take_param(pool, "image.out_proj", {c.d_hidden, c.d_model}, r);
  require_empty(pool, r);
  return p;
}

pool::AdapterParams read_adapter(Reader& r, const TrainConfig& c) {
  auto params = by_name(read_params(r), r);
  pool::AdapterParams a;
  a.heads = c.heads;
  a.d_head = c.d_model / c.heads;
  a.dropout_rate = c.dropout_rate;
  a.pe_table = take_param(params, "adapter.pe_table", {c.max_slices, c.d_model}, r);
  for (std::size_t h = 0; h < c.heads; ++h) {
    const std::string s = std::to_string(h);
    a.wq.push_back(take_param(params, "adapter.wq." + s, {c.d_model, a.d_head}, r));
    a.wk.push_back(take_param(params, "adapter.wk." + s, {c.d_model, a.d_head}, r));
    a.wv.push_back(take_param(params, "adapter.wv." + s, {c.d_model, a.d_head}, r));
  }
  a.wo = take_param(params, "adapter.wo", {c.heads * a.d_head, c.d_model}, r);
  require_empty(params, r);
  return a;
}

using Section = std::pair<std::string, std::string>;

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  std::vector<Section> sections;
  {
    nlohmann::json j = c.config;
    sections.emplace_back("config", j.dump());
  }
  {
    Writer w;
    w.u32(static_cast<std::uint32_t>(c.stage));
    w.u64(c.epoch);
    w.f64(c.best_val_loss);
    w.u64(c.best_epoch);
    w.u64(c.bad_epochs);
    w.u8(c.stopped ? 1 : 0);
    w.u64(c.shuffle_rng.key);
    w.u64(c.shuffle_rng.counter);
    w.u64(c.dropout_rng.key);
    w.u64(c.dropout_rng.counter);
    w.u64(c.model.text.seed);
    sections.emplace_back("state", w.take());
  }
  auto group = [&](const char* name, const std::vector<const Param*>& ps) {
    Writer w;
    write_params(w, ps);
    sections.emplace_back(name, w.take());
  };
  group("text", c.model.text.params());
  group("image", c.model.image.params());
  group("adapter", c.model.adapter.params());
  {
    Writer w;
    w.u64(c.optimizer.step);
    w.u32(static_cast<std::uint32_t>(c.optimizer.moments.size()));
    for (const auto& [name, mo] : c.optimizer.moments) {
      w.str(name);
      w.tensor(mo.m);
      w.tensor(mo.v);
    }
    sections.emplace_back("optimizer", w.take());
  }
  {
    Writer w;
    w.u64(c.history.size());
    for (const auto& e : c.history) {
      w.u64(e.epoch);
      w.f64(e.lr);
      w.f64(e.train_loss);
      w.f64(e.val_loss);
    }
    sections.emplace_back("history", w.take());
  }
  group("best", const_view(c.best_params));

  Writer out;
  out.bytes("RCKP");
  out.u32(kCheckpointVersion);
  out.u32(static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, payload] : sections) {
    out.str(name);
    out.u64(payload.size());
    out.bytes(payload);
  }
  return out.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader top(bytes, "container");
  if (bytes.size() < 4 || bytes.substr(0, 4) != "RCKP") top.fail("bad magic");
  top.take(4);
  const std::uint32_t version = top.u32();
  if (version != kCheckpointVersion) {
    top.fail("unsupported version " + std::to_string(version) + " (expected " +
             std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t count = top.u32();
  std::map<std::string, std::string_view> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = top.str();
    const std::uint64_t len = top.u64();
    auto payload = top.take(len);
    if (!sections.emplace(name, payload).second) top.fail("duplicate section " + name);
  }
  if (!top.done()) top.fail("trailing bytes after last section");
  auto section = [&](const std::string& name) {
    auto it = sections.find(name);
    if (it == sections.end()) top.fail("missing section " + name);
    return Reader(it->second, "section " + name);
  };

  Checkpoint c;
  {
    auto it = sections.find("config");
    if (it == sections.end()) top.fail("missing section config");
    try {
      apply_json(c.config, nlohmann::json::parse(it->second));
      c.config.validate();
    } catch (const std::exception& e) {
      top.fail(std::string("invalid config section: ") + e.what());
    }
  }
  std::uint64_t text_seed = 0;
  {
    Reader r = section("state");
    c.stage = static_cast<int>(r.u32());
    if (c.stage < 0 || c.stage > 2) r.fail("invalid stage " + std::to_string(c.stage));
    c.epoch = r.u64();
    c.best_val_loss = r.f64();
    c.best_epoch = r.u64();
    c.bad_epochs = r.u64();
    c.stopped = r.u8() != 0;
    c.shuffle_rng.key = r.u64();
    c.shuffle_rng.counter = r.u64();
    c.dropout_rng.key = r.u64();
    c.dropout_rng.counter = r.u64();
    text_seed = r.u64();
    if (!r.done()) r.fail("trailing bytes");
  }
  {
    Reader r = section("text");
    c.model.text = read_text(r, c.config, text_seed);
    if (!r.done()) r.fail("trailing bytes");
  }
  {
    Reader r = section("image");
    c.model.image = read_image(r, c.config);
    if (!r.done()) r.fail("trailing bytes");
  }
  {
    Reader r = section("adapter");
    c.model.adapter = read_adapter(r, c.config);
    if (!r.done()) r.fail("trailing bytes");
  }
  {
    Reader r = section("optimizer");
    c.optimizer.step = r.u64();
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = r.str();
      Moments mo{r.tensor(), r.tensor()};
      if (mo.m.shape() != mo.v.shape()) r.fail("moment shapes differ for " + name);
      c.optimizer.moments.emplace(std::move(name), std::move(mo));
    }
    if (!r.done()) r.fail("trailing bytes");
  }
  {
    Reader r = section("history");
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      EpochRecord e;
      e.epoch = r.u64();
      e.lr = r.f64();
      e.train_loss = r.f64();
      e.val_loss = r.f64();
      c.history.push_back(e);
    }
    if (!r.done()) r.fail("trailing bytes");
  }
  {
    Reader r = section("best");
    c.best_params = read_params(r);
    if (!r.done()) r.fail("trailing bytes");
  }
  if (sections.size() != 8) top.fail("unexpected extra sections");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return decode_checkpoint(buf.str());
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b) {
  return encode_checkpoint(a) == encode_checkpoint(b);
}

}  // namespace slicevlp::train

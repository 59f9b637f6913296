#include "fade/container/format.hpp"

#include <zlib.h>

#include <bit>
#include <cfloat>
#include <cstring>
#include <fstream>
#include <string>

#include "fade/error.hpp"
#include "fade/nn/gemm.hpp"

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace fade::container {

namespace {

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        std::array<std::uint8_t, sizeof(T)> raw;
        std::memcpy(raw.data(), &value, sizeof(T));
        out_.insert(out_.end(), raw.begin(), raw.end());
    }

private:
    std::vector<std::uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > in_.size()) fail(ErrorCode::format, "container header is truncated");
        T value;
        std::memcpy(&value, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return value;
    }

    std::size_t pos() const noexcept { return pos_; }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

constexpr std::size_t kFixedFields = 4 + 2 + 8 + 8 * 4 + 4 * 8 + 8 + 8;

void write_fields(Writer& w, const Header& h) {
    for (std::uint8_t b : kMagic) w.put(b);
    w.put(h.version);
    w.put(h.original_length);
    w.put(h.streams);
    w.put(h.time_steps);
    w.put(h.embed_dim);
    w.put(h.cache_dim);
    w.put(h.hgr_dim);
    w.put(h.ffn_dim);
    w.put(h.conv_kernel);
    w.put(h.variant);
    w.put(h.lr);
    w.put(h.beta1);
    w.put(h.beta2);
    w.put(h.eps);
    w.put(h.seed);
    w.put(h.build_fingerprint);
    for (std::uint64_t len : h.stream_lengths) w.put(len);
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes, std::uint32_t seed) {
    uLong crc = seed;
    // zlib takes uInt lengths; feed large buffers in pieces.
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
        crc = ::crc32(crc, bytes.data() + pos, uInt(n));
        pos += n;
    }
    return std::uint32_t(crc);
}

Header Header::from_config(const model::ModelConfig& cfg, std::uint64_t original_length,
                           std::uint32_t streams) {
    Header h;
    h.original_length = original_length;
    h.streams = streams;
    h.time_steps = cfg.time_steps;
    h.embed_dim = cfg.embed_dim;
    h.cache_dim = cfg.cache_dim;
    h.hgr_dim = cfg.hgr_dim;
    h.ffn_dim = cfg.ffn_dim;
    h.conv_kernel = cfg.conv_kernel;
    h.variant = std::uint32_t(cfg.variant);
    h.lr = cfg.lr;
    h.beta1 = cfg.beta1;
    h.beta2 = cfg.beta2;
    h.eps = cfg.eps;
    h.seed = cfg.seed;
    h.build_fingerprint = container::build_fingerprint();
    return h;
}

model::ModelConfig Header::model_config(std::uint32_t workers) const {
    model::ModelConfig c;
    c.time_steps = time_steps;
    c.embed_dim = embed_dim;
    c.cache_dim = cache_dim;
    c.hgr_dim = hgr_dim;
    c.ffn_dim = ffn_dim;
    c.batch = streams;
    c.conv_kernel = conv_kernel;
    c.variant = model::Variant(variant);
    c.lr = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.eps = eps;
    c.seed = seed;
    c.workers = workers;
    return c;
}

bool Header::operator==(const Header& o) const {
    auto bits = [](double x) { return std::bit_cast<std::uint64_t>(x); };
    return version == o.version && original_length == o.original_length && streams == o.streams &&
           time_steps == o.time_steps && embed_dim == o.embed_dim && cache_dim == o.cache_dim &&
           hgr_dim == o.hgr_dim && ffn_dim == o.ffn_dim && conv_kernel == o.conv_kernel &&
           variant == o.variant && bits(lr) == bits(o.lr) && bits(beta1) == bits(o.beta1) &&
           bits(beta2) == bits(o.beta2) && bits(eps) == bits(o.eps) && seed == o.seed &&
           build_fingerprint == o.build_fingerprint && stream_lengths == o.stream_lengths;
}

std::uint64_t Container::payload_size() const {
    std::uint64_t n = 0;
    for (const auto& b : bitstreams) n += b.size();
    return n;
}

std::size_t header_size(std::uint32_t streams) noexcept {
    return kFixedFields + 8 * std::size_t(streams) + 4 + 4;
}

std::vector<std::uint8_t> serialize(const Container& c) {
    require(c.bitstreams.size() == c.header.streams, ErrorCode::format,
            "container: one bitstream per stream required");
    Header h = c.header;
    h.stream_lengths.clear();
    for (const auto& b : c.bitstreams) h.stream_lengths.push_back(b.size());

    std::vector<std::uint8_t> out;
    out.reserve(header_size(h.streams) + c.payload_size());
    Writer w(out);
    write_fields(w, h);
    const std::uint32_t header_crc = crc32(out);
    std::uint32_t payload_crc = 0;
    for (const auto& b : c.bitstreams) payload_crc = crc32(b, payload_crc);
    w.put(header_crc);
    w.put(payload_crc);
    for (const auto& b : c.bitstreams) out.insert(out.end(), b.begin(), b.end());
    return out;
}

namespace {

Header read_header(std::span<const std::uint8_t> bytes, std::size_t& header_end) {
    Reader r(bytes);
    for (std::uint8_t m : kMagic)
        if (r.get<std::uint8_t>() != m) fail(ErrorCode::format, "not a FADE container (bad magic)");
    Header h;
    h.version = r.get<std::uint16_t>();
    if (h.version != kFormatVersion)
        fail(ErrorCode::version, "unsupported container version " + std::to_string(h.version));
    h.original_length = r.get<std::uint64_t>();
    h.streams = r.get<std::uint32_t>();
    h.time_steps = r.get<std::uint32_t>();
    h.embed_dim = r.get<std::uint32_t>();
    h.cache_dim = r.get<std::uint32_t>();
    h.hgr_dim = r.get<std::uint32_t>();
    h.ffn_dim = r.get<std::uint32_t>();
    h.conv_kernel = r.get<std::uint32_t>();
    h.variant = r.get<std::uint32_t>();
    h.lr = r.get<double>();
    h.beta1 = r.get<double>();
    h.beta2 = r.get<double>();
    h.eps = r.get<double>();
    h.seed = r.get<std::uint64_t>();
    h.build_fingerprint = r.get<std::uint64_t>();
    if (std::uint64_t(h.streams) * 8 > bytes.size())
        fail(ErrorCode::format, "container header is truncated");
    h.stream_lengths.resize(h.streams);
    for (auto& len : h.stream_lengths) len = r.get<std::uint64_t>();
    const std::size_t fields_end = r.pos();
    h.header_crc = r.get<std::uint32_t>();
    h.payload_crc = r.get<std::uint32_t>();
    if (crc32(bytes.first(fields_end)) != h.header_crc)
        fail(ErrorCode::checksum, "container header checksum mismatch");
    header_end = r.pos();

    if (h.original_length == 0) {
        if (h.streams != 0) fail(ErrorCode::format, "empty container declares streams");
    } else {
        if (h.streams == 0) fail(ErrorCode::format, "container declares no streams");
        try {
            h.model_config().validate();
        } catch (const Error& e) {
            fail(ErrorCode::format, std::string("container header: ") + e.what());
        }
    }
    return h;
}

}  // namespace

Header parse_header(std::span<const std::uint8_t> bytes) {
    std::size_t end = 0;
    return read_header(bytes, end);
}

Container parse(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    Container c;
    c.header = read_header(bytes, pos);
    std::uint64_t total = 0;
    for (std::uint64_t len : c.header.stream_lengths) {
        if (len > bytes.size()) fail(ErrorCode::format, "stream length exceeds container size");
        total += len;
    }
    if (total != bytes.size() - pos)
        fail(ErrorCode::format, "payload size " + std::to_string(bytes.size() - pos) +
                                    " does not match stream lengths " + std::to_string(total));
    if (crc32(bytes.subspan(pos)) != c.header.payload_crc)
        fail(ErrorCode::checksum, "container payload checksum mismatch");
    for (std::uint64_t len : c.header.stream_lengths) {
        c.bitstreams.emplace_back(bytes.begin() + std::ptrdiff_t(pos),
                                  bytes.begin() + std::ptrdiff_t(pos + len));
        pos += len;
    }
    return c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::io, "cannot open " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::io, "error reading " + path.string());
    return data;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot create " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) fail(ErrorCode::io, "error writing " + path.string());
}

void write_container(const std::filesystem::path& path, const Container& c) {
    write_file(path, serialize(c));
}

Container read_container(const std::filesystem::path& path) {
    return parse(read_file(path));
}

std::uint64_t build_fingerprint() {
    std::string id = std::string(__VERSION__) + "|" + nn::gemm_isa() + "|" +
                     std::to_string(sizeof(void*)) + "|" + std::to_string(FLT_EVAL_METHOD);
#ifdef __FAST_MATH__
    id += "|fast-math";
#endif
    const auto* p = reinterpret_cast<const std::uint8_t*>(id.data());
    const std::uint32_t lo = crc32({p, id.size()});
    const auto hi = std::uint32_t(::adler32(1, p, uInt(id.size())));
    return (std::uint64_t(hi) << 32) | lo;
}

}  // namespace fade::container

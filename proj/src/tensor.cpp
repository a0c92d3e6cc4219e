#include "cavkit/tensor.hpp"

#include "cavkit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

namespace cavkit {

namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kMagicLen = 6;
constexpr std::size_t kPrefixLen = 10; // magic + version + u16 header length
constexpr std::size_t kAlign = 64;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T load_le(const char* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&value);
        std::reverse(b, b + sizeof(T));
    }
    return value;
}

template <typename T>
void store_le(T value, char* p) {
    if constexpr (std::endian::native == std::endian::big) {
        auto* b = reinterpret_cast<unsigned char*>(&value);
        std::reverse(b, b + sizeof(T));
    }
    std::memcpy(p, &value, sizeof(T));
}

[[noreturn]] void fail(ErrorCode code, const std::string& origin, const std::string& msg) {
    throw Error(code, fmt::format("{}: {}", origin, msg));
}

// Minimal reader for the python-literal dict numpy writes as the header.
struct HeaderParser {
    std::string_view text;
    std::string_view origin;
    std::size_t pos = 0;

    [[noreturn]] void malformed(const std::string& what) const {
        fail(ErrorCode::MalformedHeader, std::string(origin),
             fmt::format("malformed header ({}) at offset {}", what, pos));
    }

    void skip_ws() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    }

    bool consume(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!consume(c)) malformed(fmt::format("expected '{}'", c));
    }

    std::string string_literal() {
        skip_ws();
        if (pos >= text.size() || (text[pos] != '\'' && text[pos] != '"')) malformed("expected string");
        const char quote = text[pos++];
        const auto end = text.find(quote, pos);
        if (end == std::string_view::npos) malformed("unterminated string");
        std::string s(text.substr(pos, end - pos));
        pos = end + 1;
        return s;
    }

    bool bool_literal() {
        skip_ws();
        if (text.substr(pos, 4) == "True") {
            pos += 4;
            return true;
        }
        if (text.substr(pos, 5) == "False") {
            pos += 5;
            return false;
        }
        malformed("expected True or False");
    }

    std::vector<std::size_t> shape_tuple() {
        expect('(');
        std::vector<std::size_t> dims;
        while (true) {
            skip_ws();
            if (consume(')')) break;
            std::size_t value = 0;
            std::size_t digits = 0;
            while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
                value = value * 10 + static_cast<std::size_t>(text[pos] - '0');
                ++pos;
                ++digits;
            }
            if (digits == 0) malformed("expected dimension");
            skip_ws();
            if (pos < text.size() && text[pos] == 'L') ++pos; // py2 long suffix
            dims.push_back(value);
            if (consume(',')) continue;
            expect(')');
            break;
        }
        return dims;
    }
};

struct Header {
    std::string descr;
    bool fortran_order = false;
    std::vector<std::size_t> shape;
};

Header parse_header(std::string_view text, std::string_view origin) {
    HeaderParser p{text, origin};
    std::optional<std::string> descr;
    std::optional<bool> fortran;
    std::optional<std::vector<std::size_t>> shape;

    p.expect('{');
    while (!p.consume('}')) {
        const auto key = p.string_literal();
        p.expect(':');
        if (key == "descr") {
            descr = p.string_literal();
        } else if (key == "fortran_order") {
            fortran = p.bool_literal();
        } else if (key == "shape") {
            shape = p.shape_tuple();
        } else {
            p.malformed("unknown key '" + key + "'");
        }
        if (!p.consume(',')) {
            p.expect('}');
            break;
        }
    }
    p.skip_ws();
    if (p.pos != text.size()) p.malformed("trailing characters");
    if (!descr || !fortran || !shape) p.malformed("missing key");
    return Header{*descr, *fortran, *shape};
}

std::string format_shape_tuple(std::span<const std::size_t> shape) {
    if (shape.size() == 1) return fmt::format("({},)", shape[0]);
    return fmt::format("({})", fmt::join(shape, ", "));
}

} // namespace

std::size_t shape_product(std::span<const std::size_t> shape) noexcept {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
    return format_shape_tuple(shape);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty()) throw Error(ErrorCode::ShapeMismatch, "tensor shape must have at least one axis");
    if (std::find(shape_.begin(), shape_.end(), std::size_t{0}) != shape_.end())
        throw Error(ErrorCode::ShapeMismatch, "tensor shape entries must be positive: " + shape_to_string(shape_));
    if (shape_product(shape_) != data_.size())
        throw Error(ErrorCode::ShapeMismatch,
                    fmt::format("tensor data length {} does not match shape {}", data_.size(), shape_to_string(shape_)));
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : Tensor(shape, std::vector<float>(shape_product(shape), 0.0f)) {}

std::size_t Tensor::row_size() const noexcept {
    if (shape_.empty()) return 0;
    return shape_product(std::span(shape_).subspan(1));
}

std::span<const float> Tensor::row(std::size_t i) const {
    if (i >= rows()) throw Error(ErrorCode::InvalidArgument, fmt::format("row {} out of range ({} rows)", i, rows()));
    const auto width = row_size();
    return std::span<const float>(data_).subspan(i * width, width);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::vector<char> encode_npy(const Tensor& t) {
    if (t.rank() == 0) throw Error(ErrorCode::ShapeMismatch, "cannot encode a tensor without shape");
    if (!t.all_finite()) throw Error(ErrorCode::NonFinite, "refusing to write tensor with non-finite entries");

    std::string header = fmt::format("{{'descr': '<f4', 'fortran_order': False, 'shape': {}, }}",
                                     format_shape_tuple(t.shape()));
    const std::size_t unpadded = kPrefixLen + header.size() + 1;
    const std::size_t total = (unpadded + kAlign - 1) / kAlign * kAlign;
    header.append(total - unpadded, ' ');
    header.push_back('\n');
    if (header.size() > 0xFFFF) throw Error(ErrorCode::ShapeMismatch, "NPY v1.0 header too long");

    std::vector<char> out(kPrefixLen + header.size() + t.size() * sizeof(float));
    std::memcpy(out.data(), kMagic, kMagicLen);
    out[6] = 1;
    out[7] = 0;
    store_le(static_cast<std::uint16_t>(header.size()), out.data() + 8);
    std::memcpy(out.data() + kPrefixLen, header.data(), header.size());
    char* dst = out.data() + kPrefixLen + header.size();
    for (float v : t.data()) {
        store_le(v, dst);
        dst += sizeof(float);
    }
    return out;
}

Tensor decode_npy(std::span<const char> bytes, const std::string& origin) {
    if (bytes.size() < kPrefixLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0)
        fail(ErrorCode::BadMagic, origin, "not an NPY file (bad magic)");
    if (bytes[6] != 1 || bytes[7] != 0)
        fail(ErrorCode::UnsupportedVersion, origin,
             fmt::format("unsupported NPY version {}.{}", int(bytes[6]), int(bytes[7])));

    const std::size_t header_len = load_le<std::uint16_t>(bytes.data() + 8);
    if (bytes.size() < kPrefixLen + header_len) fail(ErrorCode::TruncatedData, origin, "truncated header");
    std::string_view header(bytes.data() + kPrefixLen, header_len);
    if (header.empty() || header.back() != '\n') fail(ErrorCode::MalformedHeader, origin, "header not newline-terminated");
    header.remove_suffix(1);
    while (!header.empty() && header.back() == ' ') header.remove_suffix(1);

    const Header h = parse_header(header, origin);
    if (h.fortran_order) fail(ErrorCode::UnsupportedLayout, origin, "fortran-order arrays are not supported");

    std::size_t item = 0;
    if (h.descr == "<f4") {
        item = 4;
    } else if (h.descr == "<f8") {
        item = 8;
    } else {
        fail(ErrorCode::UnsupportedDescriptor, origin, "unsupported dtype descriptor '" + h.descr + "'");
    }
    if (h.shape.empty()) fail(ErrorCode::ShapeMismatch, origin, "zero-dimensional arrays are not supported");

    const std::size_t count = shape_product(h.shape);
    const std::size_t payload = bytes.size() - kPrefixLen - header_len;
    if (payload < count * item)
        fail(ErrorCode::TruncatedData, origin,
             fmt::format("shape {} needs {} data bytes, file has {}", shape_to_string(h.shape), count * item, payload));
    if (payload > count * item)
        fail(ErrorCode::ShapeMismatch, origin,
             fmt::format("shape {} needs {} data bytes, file has {}", shape_to_string(h.shape), count * item, payload));

    std::vector<float> data(count);
    const char* src = bytes.data() + kPrefixLen + header_len;
    for (std::size_t i = 0; i < count; ++i) {
        data[i] = item == 4 ? load_le<float>(src + i * 4) : static_cast<float>(load_le<double>(src + i * 8));
        if (!std::isfinite(data[i])) fail(ErrorCode::NonFinite, origin, fmt::format("non-finite value at flat index {}", i));
    }
    return Tensor(h.shape, std::move(data));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    const auto bytes = encode_npy(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingFile, "cannot open tensor file: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_npy(bytes, path.string());
}

} // namespace cavkit

#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "seps/featurebank.hpp"
#include "seps/tensor.hpp"

namespace seps::detail {

// Little-endian writer.
class Encoder {
public:
    explicit Encoder(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
    void matrix(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rows()));
        for (double v : t.data()) f32(v);
    }

private:
    std::ostream& out_;
};

class Decoder {
public:
    Decoder(std::vector<std::uint8_t> buf, std::string what = "bank") : buf_(std::move(buf)), what_(std::move(what)) {}

    std::size_t remaining() const { return buf_.size() - pos_; }
    void need(std::size_t n) const {
        if (remaining() < n) throw bank_error("corrupt " + what_ + ": truncated");
    }
    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    Tensor matrix(std::size_t dim) {
        const std::size_t rows = u32();
        // Guard the allocation before trusting the row count.
        if (dim != 0 && rows > remaining() / (4 * dim)) throw bank_error("corrupt " + what_ + ": truncated");
        std::vector<double> data(rows * dim);
        for (double& v : data) v = f32();
        return Tensor({rows, dim}, std::move(data));
    }

private:
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
    std::string what_;
};

inline std::vector<std::uint8_t> slurp(std::istream& in) {
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace seps::detail

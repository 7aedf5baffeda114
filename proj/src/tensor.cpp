#include "mdatrack/tensor.hpp"

#include "mdatrack/errors.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace mdt {

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    const std::size_t n = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
    data_.assign(n, fill);
}

std::size_t Tensor::flat_index(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
        throw ContractError("tensor index order " + std::to_string(index.size()) + " != tensor order " +
                            std::to_string(shape_.size()));
    }
    std::size_t flat = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
        if (index[a] >= shape_[a]) {
            throw RangeError("tensor index out of range on axis " + std::to_string(a));
        }
        flat = flat * shape_[a] + index[a];
    }
    return flat;
}

void Tensor::unravel(std::size_t flat, std::span<std::size_t> index) const {
    for (std::size_t a = shape_.size(); a-- > 0;) {
        index[a] = flat % shape_[a];
        flat /= shape_[a];
    }
}

double& Tensor::at(std::span<const std::size_t> index) { return data_[flat_index(index)]; }
double Tensor::at(std::span<const std::size_t> index) const { return data_[flat_index(index)]; }

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_string(const Shape& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(shape[i]);
    }
    return s;
}

void write_tensor(std::ostream& out, const Tensor& t) {
    out << "shape " << shape_string(t.shape()) << '\n';
    const auto old_precision = out.precision(17);
    for (double v : t.data()) out << v << '\n';
    out.precision(old_precision);
}

Tensor read_tensor(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing shape header", 1);
    std::istringstream header(line);
    std::string tag;
    header >> tag;
    if (tag != "shape") throw ParseError("expected 'shape' header", 1);
    Shape shape;
    std::size_t d = 0;
    while (header >> d) shape.push_back(d);
    Tensor t(shape);
    std::size_t line_no = 1;
    for (std::size_t i = 0; i < t.size(); ++i) {
        ++line_no;
        if (!std::getline(in, line)) throw ParseError("tensor truncated", line_no);
        try {
            t[i] = std::stod(line);
        } catch (const std::exception&) {
            throw ParseError("bad tensor value '" + line + "'", line_no);
        }
    }
    return t;
}

}  // namespace mdt

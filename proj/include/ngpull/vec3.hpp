#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <ostream>

namespace ngp {

template <typename T>
struct Vec3 {
    T x = T(0), y = T(0), z = T(0);

    constexpr Vec3() = default;
    constexpr Vec3(T xx, T yy, T zz) : x(xx), y(yy), z(zz) {}

    constexpr T& operator[](std::size_t i) { return (&x)[i]; }
    constexpr const T& operator[](std::size_t i) const { return (&x)[i]; }

    constexpr Vec3 operator+(const Vec3& v) const { return {x + v.x, y + v.y, z + v.z}; }
    constexpr Vec3 operator-(const Vec3& v) const { return {x - v.x, y - v.y, z - v.z}; }
    constexpr Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }

    constexpr Vec3& operator+=(const Vec3& v) {
        x += v.x; y += v.y; z += v.z;
        return *this;
    }
    constexpr Vec3& operator-=(const Vec3& v) {
        x -= v.x; y -= v.y; z -= v.z;
        return *this;
    }
    constexpr Vec3& operator*=(T s) {
        x *= s; y *= s; z *= s;
        return *this;
    }

    constexpr bool operator==(const Vec3& v) const { return x == v.x && y == v.y && z == v.z; }

    constexpr T dot(const Vec3& v) const { return x * v.x + y * v.y + z * v.z; }
    constexpr Vec3 cross(const Vec3& v) const {
        return {y * v.z - z * v.y, z * v.x - x * v.z, x * v.y - y * v.x};
    }
    constexpr T squared_norm() const { return x * x + y * y + z * z; }
    T norm() const { return std::sqrt(squared_norm()); }

    template <typename U>
    constexpr Vec3<U> cast() const {
        return {static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)};
    }

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

template <typename T>
constexpr Vec3<T> operator*(T s, const Vec3<T>& v) {
    return v * s;
}

template <typename T>
std::ostream& operator<<(std::ostream& os, const Vec3<T>& v) {
    return os << '(' << v.x << ", " << v.y << ", " << v.z << ')';
}

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

template <typename T>
constexpr T squared_distance(const Vec3<T>& a, const Vec3<T>& b) {
    const T dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

}  // namespace ngp

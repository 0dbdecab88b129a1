//! Affine secp256k1 arithmetic on big integers and Keccak-256 addresses.

use num_bigint::BigUint;
use num_traits::Zero;
use sha3::{Digest, Keccak256};

pub fn hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).unwrap()
}

pub struct Curve {
    pub p: BigUint,
    pub n: BigUint,
    pub g: (BigUint, BigUint),
}

impl Curve {
    pub fn secp256k1() -> Self {
        Curve {
            p: hex("FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F"),
            n: hex("FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141"),
            g: (
                hex("79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798"),
                hex("483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8"),
            ),
        }
    }

    fn inv(&self, x: &BigUint) -> BigUint {
        x.modpow(&(&self.p - 2u32), &self.p)
    }

    fn sub(&self, a: &BigUint, b: &BigUint) -> BigUint {
        ((a + &self.p) - (b % &self.p)) % &self.p
    }

    fn add(&self, a: &Option<(BigUint, BigUint)>, b: &Option<(BigUint, BigUint)>) -> Option<(BigUint, BigUint)> {
        let (Some((x1, y1)), Some((x2, y2))) = (a, b) else {
            return a.clone().or_else(|| b.clone());
        };
        let p = &self.p;
        let lambda = if x1 == x2 {
            if (y1 + y2) % p == BigUint::zero() {
                return None;
            }
            (BigUint::from(3u32) * x1 * x1) % p * self.inv(&((BigUint::from(2u32) * y1) % p)) % p
        } else {
            self.sub(y2, y1) * self.inv(&self.sub(x2, x1)) % p
        };
        let x3 = self.sub(&self.sub(&(&lambda * &lambda % p), x1), x2);
        let y3 = self.sub(&(&lambda * self.sub(x1, &x3) % p), y1);
        Some((x3, y3))
    }

    pub fn mul(&self, k: &BigUint) -> Option<(BigUint, BigUint)> {
        let mut acc = None;
        let mut base = Some(self.g.clone());
        for i in 0..k.bits() {
            if k.bit(i) {
                acc = self.add(&acc, &base);
            }
            base = self.add(&base, &base);
        }
        acc
    }

    pub fn address(&self, k: &BigUint) -> [u8; 20] {
        let (x, y) = self.mul(k).unwrap();
        let mut buf = [0u8; 64];
        let xb = x.to_bytes_be();
        let yb = y.to_bytes_be();
        buf[32 - xb.len()..32].copy_from_slice(&xb);
        buf[64 - yb.len()..].copy_from_slice(&yb);
        let h = Keccak256::digest(buf);
        let mut out = [0u8; 20];
        out.copy_from_slice(&h[12..]);
        out
    }
}

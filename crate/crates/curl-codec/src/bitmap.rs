//! Bit-packed 2D bitmap: row-major, MSB-first within each byte, rows padded
//! to byte boundaries. This is the wire layout used inside the container.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    rows: usize,
    cols: usize,
    stride: usize, // bytes per row
    data: Vec<u8>,
}

impl Bitmap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(8);
        Self {
            rows,
            cols,
            stride,
            data: vec![0u8; rows * stride],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let byte = self.data[row * self.stride + col / 8];
        (byte >> (7 - col % 8)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let byte = &mut self.data[row * self.stride + col / 8];
        let mask = 1u8 << (7 - col % 8);
        if value {
            *byte |= mask;
        } else {
            *byte &= !mask;
        }
    }

    /// Number of set bits.
    pub fn count_ones(&self) -> usize {
        // padding bits are never set, so a plain popcount is exact
        self.data.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Raw packed bytes (rows padded to byte boundaries).
    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    /// Rebuilds a bitmap from its packed byte form.
    pub fn from_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Result<Self> {
        let stride = cols.div_ceil(8);
        if bytes.len() != rows * stride {
            return Err(Error::DimensionMismatch {
                expected: format!("{} bytes for {rows}x{cols} bitmap", rows * stride),
                actual: format!("{} bytes", bytes.len()),
            });
        }
        let mut bm = Self {
            rows,
            cols,
            stride,
            data: bytes.to_vec(),
        };
        // clear padding so equality and popcount stay canonical
        if !cols.is_multiple_of(8) {
            let keep = !(0xffu8 >> (cols % 8));
            for r in 0..rows {
                bm.data[r * stride + stride - 1] &= keep;
            }
        }
        Ok(bm)
    }

    /// True if every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Bitmap) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.data.iter().zip(&other.data).all(|(a, b)| a & !b == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_roundtrip() {
        let mut bm = Bitmap::zeros(3, 11);
        bm.set(0, 0, true);
        bm.set(2, 10, true);
        bm.set(1, 7, true);
        assert!(bm.get(0, 0) && bm.get(2, 10) && bm.get(1, 7));
        assert!(!bm.get(0, 1));
        assert_eq!(bm.count_ones(), 3);
        bm.set(1, 7, false);
        assert_eq!(bm.count_ones(), 2);
    }

    #[test]
    fn msb_first_layout() {
        let mut bm = Bitmap::zeros(1, 8);
        bm.set(0, 0, true);
        assert_eq!(bm.as_bytes(), &[0b1000_0000]);
        bm.set(0, 7, true);
        assert_eq!(bm.as_bytes(), &[0b1000_0001]);
    }

    #[test]
    fn row_padding_to_byte_boundary() {
        let bm = Bitmap::zeros(2, 9);
        assert_eq!(bm.as_bytes().len(), 4); // 2 bytes per row
    }

    #[test]
    fn bytes_roundtrip() {
        let mut bm = Bitmap::zeros(5, 13);
        for (r, c) in [(0, 12), (3, 0), (4, 5), (2, 8)] {
            bm.set(r, c, true);
        }
        let back = Bitmap::from_bytes(5, 13, bm.as_bytes()).unwrap();
        assert_eq!(bm, back);
    }

    #[test]
    fn from_bytes_rejects_wrong_length() {
        assert!(Bitmap::from_bytes(2, 9, &[0u8; 3]).is_err());
    }
}

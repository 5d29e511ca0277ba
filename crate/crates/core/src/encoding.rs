//! Canonical tag-length-value encoding.
//!
//! Every value that is hashed, signed, or written to disk goes through this
//! module, so the encoding must be injective and stable: one byte of type tag,
//! a four byte big-endian payload length, then the payload. Lists carry a four
//! byte big-endian element count at the start of their payload; each element is
//! itself a complete node. Strings are UTF-8, integers are eight byte
//! big-endian. Struct payloads are the concatenation of their field nodes in
//! declared order, under a tag unique to the struct, which is what makes the
//! whole scheme injective across types.
//!
//! The format is frozen; see `docs/encoding.md` for the tag table and golden
//! vectors.

use thiserror::Error;

/// Type tags. One byte, unique per wire type. Grouped by subsystem so the
/// table in `docs/encoding.md` stays readable.
pub mod tag {
    pub const U64: u8 = 0x01;
    pub const STRING: u8 = 0x02;
    pub const BYTES: u8 = 0x03;
    pub const LIST: u8 = 0x04;
    pub const DIGEST: u8 = 0x05;
    pub const POINT: u8 = 0x06;
    pub const SCALAR: u8 = 0x07;

    pub const TYPE_TAG: u8 = 0x10;
    pub const OBJECT: u8 = 0x11;
    pub const TRACE: u8 = 0x12;
    pub const TRANSACTION: u8 = 0x13;
    pub const ENVELOPE: u8 = 0x14;
    pub const SIGNATURE: u8 = 0x15;
    pub const DECISION: u8 = 0x16;
    pub const ABORT_REASON: u8 = 0x17;

    pub const MSG_PREPARE: u8 = 0x20;
    pub const MSG_PREPARED: u8 = 0x21;
    pub const MSG_ACCEPT: u8 = 0x22;
    pub const MSG_CREATE_OBJECT: u8 = 0x23;
    pub const NODE_ID: u8 = 0x24;
    pub const STMT_PREPARED: u8 = 0x25;
    pub const STMT_UNKNOWN_TX: u8 = 0x26;
    pub const STMT_HEAD: u8 = 0x27;
    pub const HEAD_SIG: u8 = 0x28;
    pub const MSG_NOTICE: u8 = 0x29;

    pub const CHECKPOINT: u8 = 0x30;
    pub const ENTRY_COMMITTED: u8 = 0x31;
    pub const ENTRY_ABORTED: u8 = 0x32;
    pub const ENTRY_PROMISE: u8 = 0x33;
    pub const ENTRY_ACCEPT: u8 = 0x34;
    pub const ENTRY_PREPARE_SEQ: u8 = 0x35;
    pub const ENTRY_OBJECT_CREATED: u8 = 0x36;
    pub const SHARD_DECISION: u8 = 0x37;
    pub const CHAIN_HEADER: u8 = 0x38;
    pub const CHECKPOINT_HEADER: u8 = 0x39;
    pub const MERKLE_PROOF: u8 = 0x3A;
    pub const MERKLE_STEP: u8 = 0x3B;
    pub const AUDIT_PROOF_KNOWN: u8 = 0x3C;
    pub const AUDIT_PROOF_UNKNOWN: u8 = 0x3D;
    pub const CHAIN_RECORD: u8 = 0x3E;

    pub const CIPHERTEXT: u8 = 0x40;
    pub const PROOF_BINARY_VOTE: u8 = 0x41;
    pub const PROOF_SUM_ONE: u8 = 0x42;
    pub const PROOF_ZERO_INIT: u8 = 0x43;
    pub const PROOF_DECRYPTION: u8 = 0x44;
    pub const PROOF_BILL_OPENING: u8 = 0x45;

    pub const DESCRIPTOR: u8 = 0x50;
    pub const SHARD_META: u8 = 0x51;
    pub const ACCOUNT: u8 = 0x52;
    pub const METER: u8 = 0x53;
    pub const READING: u8 = 0x54;
    pub const BILL: u8 = 0x55;
    pub const VOTE: u8 = 0x56;
    pub const TALLY: u8 = 0x57;
    pub const CONTRACT_META: u8 = 0x58;
    pub const MAPPING_META: u8 = 0x59;
    pub const FLOW: u8 = 0x5A;
    pub const SIG_ENTRY: u8 = 0x5B;
    pub const MOVE: u8 = 0x5C;

    pub const LP_MS_UPDATE: u8 = 0x60;
    pub const LP_MS_EVICT: u8 = 0x61;
    pub const LP_MC_CREATE: u8 = 0x62;
    pub const LP_COIN_INIT: u8 = 0x63;
    pub const LP_COIN_TRANSFER: u8 = 0x64;
    pub const LP_SMET_READING: u8 = 0x65;
    pub const LP_SMET_BILL: u8 = 0x66;
    pub const LP_SVOTE_CREATE: u8 = 0x67;
    pub const LP_SVOTE_VOTE: u8 = 0x68;
    pub const LP_SVOTE_TALLY: u8 = 0x69;
    pub const LR_COIN_TRANSFER: u8 = 0x6A;

    pub const INTENT_MS_UPDATE: u8 = 0x70;
    pub const INTENT_COIN: u8 = 0x71;
    pub const INTENT_READING: u8 = 0x72;
    pub const INTENT_ELECTION: u8 = 0x73;
    pub const INTENT_BALLOT: u8 = 0x74;
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    /// A single payload would need a length field wider than 32 bits.
    #[error("payload of {0} bytes exceeds the 32-bit length limit")]
    Oversize(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("expected tag {expected:#04x}, found {found:#04x}")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("unrecognized tag {0:#04x}")]
    UnknownTag(u8),
    #[error("trailing bytes after a complete value")]
    TrailingBytes,
    #[error("string payload is not valid UTF-8")]
    InvalidUtf8,
    #[error("payload length {found} does not match the expected {expected}")]
    BadLength { expected: usize, found: usize },
    #[error("unknown enum discriminant {0}")]
    UnknownDiscriminant(u64),
    #[error("byte string does not decode to a group element")]
    BadGroupElement,
    #[error("list payload size disagrees with its element count")]
    BadListShape,
}

const MAX_PAYLOAD: u64 = u32::MAX as u64;

/// Incremental encoder. Nodes are opened with a tag, filled, and closed; the
/// length field is patched in when the node closes.
pub struct Enc {
    buf: Vec<u8>,
}

impl Enc {
    pub fn new() -> Self {
        Enc { buf: Vec::new() }
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    fn open(&mut self, tag: u8) -> usize {
        self.buf.push(tag);
        self.buf.extend_from_slice(&[0u8; 4]);
        self.buf.len()
    }

    fn close(&mut self, start: usize) -> Result<(), EncodeError> {
        let len = self.buf.len() - start;
        check_payload_len(len)?;
        let len32 = (len as u32).to_be_bytes();
        self.buf[start - 4..start].copy_from_slice(&len32);
        Ok(())
    }

    /// Open a node with `tag`, run `f` to fill its payload, then patch the
    /// length. This is how struct and enum encoders are written.
    pub fn node(
        &mut self,
        tag: u8,
        f: impl FnOnce(&mut Enc) -> Result<(), EncodeError>,
    ) -> Result<(), EncodeError> {
        let start = self.open(tag);
        f(self)?;
        self.close(start)
    }

    pub fn u64(&mut self, v: u64) -> Result<(), EncodeError> {
        let start = self.open(tag::U64);
        self.buf.extend_from_slice(&v.to_be_bytes());
        self.close(start)
    }

    pub fn string(&mut self, s: &str) -> Result<(), EncodeError> {
        let start = self.open(tag::STRING);
        self.buf.extend_from_slice(s.as_bytes());
        self.close(start)
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<(), EncodeError> {
        let start = self.open(tag::BYTES);
        self.buf.extend_from_slice(b);
        self.close(start)
    }

    /// Fixed 32-byte payload under the given tag (digests, points, scalars).
    pub fn fixed32(&mut self, tag: u8, b: &[u8; 32]) -> Result<(), EncodeError> {
        let start = self.open(tag);
        self.buf.extend_from_slice(b);
        self.close(start)
    }

    pub fn list<T: Encode>(&mut self, items: &[T]) -> Result<(), EncodeError> {
        let start = self.open(tag::LIST);
        check_count(items.len())?;
        self.buf.extend_from_slice(&(items.len() as u32).to_be_bytes());
        for item in items {
            item.encode_into(self)?;
        }
        self.close(start)
    }

    /// List node from a closure per element, for lists of non-`Encode` shapes.
    pub fn list_with(
        &mut self,
        count: usize,
        f: impl FnOnce(&mut Enc) -> Result<(), EncodeError>,
    ) -> Result<(), EncodeError> {
        let start = self.open(tag::LIST);
        check_count(count)?;
        self.buf.extend_from_slice(&(count as u32).to_be_bytes());
        f(self)?;
        self.close(start)
    }
}

impl Default for Enc {
    fn default() -> Self {
        Self::new()
    }
}

fn check_payload_len(len: usize) -> Result<(), EncodeError> {
    if len as u64 > MAX_PAYLOAD {
        Err(EncodeError::Oversize(len))
    } else {
        Ok(())
    }
}

fn check_count(count: usize) -> Result<(), EncodeError> {
    if count as u64 > MAX_PAYLOAD {
        Err(EncodeError::Oversize(count))
    } else {
        Ok(())
    }
}

/// Cursor over an encoded byte string. Decoders are strict: lengths must be
/// consistent, payloads fully consumed, and the top level must end exactly at
/// the end of input.
pub struct Dec<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Dec { input, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.input.len()
    }

    pub fn peek_tag(&self) -> Result<u8, DecodeError> {
        self.input
            .get(self.pos)
            .copied()
            .ok_or(DecodeError::Truncated)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.input.len() - self.pos < n {
            return Err(DecodeError::Truncated);
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn header(&mut self, expected: u8) -> Result<usize, DecodeError> {
        let found = self.peek_tag()?;
        if found != expected {
            return Err(DecodeError::UnexpectedTag { expected, found });
        }
        self.pos += 1;
        let len = self.take(4)?;
        Ok(u32::from_be_bytes(len.try_into().unwrap()) as usize)
    }

    /// Enter the payload of a node with tag `expected` and decode it with `f`.
    /// The payload must be consumed exactly.
    pub fn node<T>(
        &mut self,
        expected: u8,
        f: impl FnOnce(&mut Dec<'a>) -> Result<T, DecodeError>,
    ) -> Result<T, DecodeError> {
        let len = self.header(expected)?;
        let payload = self.take(len)?;
        let mut inner = Dec::new(payload);
        let value = f(&mut inner)?;
        if !inner.is_empty() {
            return Err(DecodeError::TrailingBytes);
        }
        Ok(value)
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        let len = self.header(tag::U64)?;
        if len != 8 {
            return Err(DecodeError::BadLength {
                expected: 8,
                found: len,
            });
        }
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let len = self.header(tag::STRING)?;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|_| DecodeError::InvalidUtf8)
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.header(tag::BYTES)?;
        Ok(self.take(len)?.to_vec())
    }

    pub fn fixed32(&mut self, tag: u8) -> Result<[u8; 32], DecodeError> {
        let len = self.header(tag)?;
        if len != 32 {
            return Err(DecodeError::BadLength {
                expected: 32,
                found: len,
            });
        }
        let b = self.take(32)?;
        Ok(b.try_into().unwrap())
    }

    pub fn list<T: Decode>(&mut self) -> Result<Vec<T>, DecodeError> {
        self.list_with(T::decode_from)
    }

    pub fn list_with<T>(
        &mut self,
        mut f: impl FnMut(&mut Dec<'a>) -> Result<T, DecodeError>,
    ) -> Result<Vec<T>, DecodeError> {
        let len = self.header(tag::LIST)?;
        let payload = self.take(len)?;
        let mut inner = Dec::new(payload);
        let count = u32::from_be_bytes(inner.take(4)?.try_into().unwrap()) as usize;
        let mut out = Vec::new();
        for _ in 0..count {
            out.push(f(&mut inner)?);
        }
        if !inner.is_empty() {
            return Err(DecodeError::BadListShape);
        }
        Ok(out)
    }
}

pub trait Encode {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError>;

    fn encode(&self) -> Vec<u8> {
        let mut e = Enc::new();
        // Oversize is the only failure mode and needs a >4 GiB field; domain
        // values never get there, so the infallible form is the ergonomic one.
        self.encode_into(&mut e)
            .expect("canonical encoding exceeded the 32-bit length limit");
        e.into_bytes()
    }

    fn try_encode(&self) -> Result<Vec<u8>, EncodeError> {
        let mut e = Enc::new();
        self.encode_into(&mut e)?;
        Ok(e.into_bytes())
    }
}

pub trait Decode: Sized {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError>;

    fn decode(input: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Dec::new(input);
        let value = Self::decode_from(&mut d)?;
        if !d.is_empty() {
            return Err(DecodeError::TrailingBytes);
        }
        Ok(value)
    }
}

impl Encode for u64 {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.u64(*self)
    }
}

impl Decode for u64 {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.u64()
    }
}

impl Encode for String {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.string(self)
    }
}

impl Decode for String {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.string()
    }
}

impl Encode for Vec<u8> {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.bytes(self)
    }
}

impl Decode for Vec<u8> {
    fn decode_from(d: &mut Dec<'_>) -> Result<Self, DecodeError> {
        d.bytes()
    }
}

impl<T: Encode> Encode for [T] {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.list(self)
    }
}

impl<T: Encode> Encode for Vec<T> {
    fn encode_into(&self, e: &mut Enc) -> Result<(), EncodeError> {
        e.list(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Golden vectors, written out by hand from the format definition before
    // the encoder existed.
    #[test]
    fn u64_golden() {
        let mut e = Enc::new();
        e.u64(7).unwrap();
        assert_eq!(
            e.into_bytes(),
            [0x01, 0x00, 0x00, 0x00, 0x08, 0, 0, 0, 0, 0, 0, 0, 7]
        );
    }

    #[test]
    fn string_golden() {
        let mut e = Enc::new();
        e.string("coin").unwrap();
        assert_eq!(
            e.into_bytes(),
            [0x02, 0x00, 0x00, 0x00, 0x04, b'c', b'o', b'i', b'n']
        );
    }

    #[test]
    fn empty_string_golden() {
        let mut e = Enc::new();
        e.string("").unwrap();
        assert_eq!(e.into_bytes(), [0x02, 0x00, 0x00, 0x00, 0x00]);
    }

    #[test]
    fn list_golden() {
        // [1u64, 2u64]: tag 0x04, len 4 + 2*13 = 30, count 2, elements.
        let mut e = Enc::new();
        e.list(&[1u64, 2u64]).unwrap();
        let bytes = e.into_bytes();
        assert_eq!(&bytes[..5], &[0x04, 0x00, 0x00, 0x00, 30]);
        assert_eq!(&bytes[5..9], &[0, 0, 0, 2]);
        assert_eq!(&bytes[9..22], &[0x01, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(&bytes[22..], &[0x01, 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 0, 2]);
    }

    #[test]
    fn empty_list_golden() {
        let mut e = Enc::new();
        e.list::<u64>(&[]).unwrap();
        assert_eq!(e.into_bytes(), [0x04, 0x00, 0x00, 0x00, 0x04, 0, 0, 0, 0]);
    }

    #[test]
    fn nested_node_patches_length() {
        let mut e = Enc::new();
        e.node(0x7F, |e| {
            e.u64(1)?;
            e.string("x")
        })
        .unwrap();
        let bytes = e.into_bytes();
        assert_eq!(bytes[0], 0x7F);
        assert_eq!(&bytes[1..5], &(13u32 + 6).to_be_bytes());
        assert_eq!(bytes.len(), 5 + 13 + 6);
    }

    #[test]
    fn oversize_guard() {
        assert_eq!(check_payload_len(1 << 20), Ok(()));
        assert_eq!(check_payload_len(u32::MAX as usize), Ok(()));
        assert_eq!(
            check_payload_len(u32::MAX as usize + 1),
            Err(EncodeError::Oversize(u32::MAX as usize + 1))
        );
    }

    #[test]
    fn decode_round_trip() {
        let mut e = Enc::new();
        e.u64(42).unwrap();
        e.string("hello").unwrap();
        e.bytes(&[9, 8, 7]).unwrap();
        e.list(&[5u64, 6u64]).unwrap();
        let bytes = e.into_bytes();
        let mut d = Dec::new(&bytes);
        assert_eq!(d.u64().unwrap(), 42);
        assert_eq!(d.string().unwrap(), "hello");
        assert_eq!(d.bytes().unwrap(), vec![9, 8, 7]);
        assert_eq!(d.list::<u64>().unwrap(), vec![5, 6]);
        assert!(d.is_empty());
    }

    #[test]
    fn decode_rejects_wrong_tag() {
        let mut e = Enc::new();
        e.u64(1).unwrap();
        let bytes = e.into_bytes();
        let mut d = Dec::new(&bytes);
        assert_eq!(
            d.string(),
            Err(DecodeError::UnexpectedTag {
                expected: tag::STRING,
                found: tag::U64
            })
        );
    }

    #[test]
    fn decode_rejects_truncation() {
        let mut e = Enc::new();
        e.string("hello").unwrap();
        let bytes = e.into_bytes();
        for cut in 0..bytes.len() {
            let mut d = Dec::new(&bytes[..cut]);
            assert!(d.string().is_err(), "cut at {cut} should fail");
        }
    }

    #[test]
    fn decode_rejects_bad_u64_length() {
        let bytes = [0x01, 0, 0, 0, 4, 0, 0, 0, 1];
        let mut d = Dec::new(&bytes);
        assert_eq!(
            d.u64(),
            Err(DecodeError::BadLength {
                expected: 8,
                found: 4
            })
        );
    }

    #[test]
    fn decode_rejects_list_shape_mismatch() {
        // Count says 1 but payload holds two elements.
        let mut e = Enc::new();
        e.list(&[1u64, 2u64]).unwrap();
        let mut bytes = e.into_bytes();
        bytes[8] = 1;
        let mut d = Dec::new(&bytes);
        assert_eq!(d.list::<u64>(), Err(DecodeError::BadListShape));
    }

    #[test]
    fn decode_rejects_invalid_utf8() {
        let bytes = [0x02, 0, 0, 0, 2, 0xFF, 0xFE];
        let mut d = Dec::new(&bytes);
        assert_eq!(d.string(), Err(DecodeError::InvalidUtf8));
    }

    #[test]
    fn top_level_trailing_bytes_rejected() {
        let mut e = Enc::new();
        e.u64(1).unwrap();
        let mut bytes = e.into_bytes();
        bytes.push(0);
        assert_eq!(u64::decode(&bytes), Err(DecodeError::TrailingBytes));
    }
}

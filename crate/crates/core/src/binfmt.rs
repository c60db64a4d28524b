//! Little-endian binary envelope shared by the embedding (`CEMB`) and
//! probe checkpoint (`CMLP`) files: 4-byte magic, u16 version, payload,
//! then a u32 CRC32 of every preceding byte.

use crate::error::{Error, Result};

pub(crate) struct EnvelopeWriter {
    buf: Vec<u8>,
}

impl EnvelopeWriter {
    pub fn new(magic: &[u8; 4], version: u16) -> Self {
        let mut buf = Vec::with_capacity(1024);
        buf.extend_from_slice(magic);
        buf.extend_from_slice(&version.to_le_bytes());
        Self { buf }
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct EnvelopeReader<'a> {
    body: &'a [u8],
    pos: usize,
    context: &'static str,
}

impl<'a> EnvelopeReader<'a> {
    /// Checks magic, version and trailing checksum before any payload is read.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], version: u16, context: &'static str) -> Result<Self> {
        if bytes.len() < 4 + 2 + 4 {
            return Err(Error::format(context, "file truncated"));
        }
        if &bytes[..4] != magic {
            return Err(Error::format(context, "bad magic"));
        }
        let found = u16::from_le_bytes([bytes[4], bytes[5]]);
        if found != version {
            return Err(Error::format(context, format!("unsupported version {found}")));
        }
        let split = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[split..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(&bytes[..split]);
        if stored != actual {
            return Err(Error::format(
                context,
                format!("checksum mismatch (stored {stored:08x}, computed {actual:08x})"),
            ));
        }
        Ok(Self {
            body: &bytes[..split],
            pos: 6,
            context,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.body.len() - self.pos < n {
            return Err(Error::format(self.context, "file truncated"));
        }
        let out = &self.body[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::format(self.context, message)
    }

    /// Fails if payload bytes remain before the checksum.
    pub fn finish(self) -> Result<()> {
        if self.pos != self.body.len() {
            return Err(Error::format(
                self.context,
                format!("{} unexpected trailing bytes", self.body.len() - self.pos),
            ));
        }
        Ok(())
    }
}

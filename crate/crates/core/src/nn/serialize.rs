//! Single-file model format.
//!
//! ```text
//! FENET1\n
//! input <d0>,<d1>,...\n
//! classes <n>\n
//! layers <count>\n
//! dense <out> <in>\n                      (one line per layer)
//! conv2d <outC> <inC> <kH> <kW> <stride> <valid|same>\n
//! relu\n | avgpool2d <size> <stride>\n | flatten\n
//! end\n
//! <weight, bias of each parameterised layer, in layer order, as little-endian f64>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use super::layer::{Layer, Padding};
use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const MAGIC: &str = "FENET1";

pub fn write_network<T: Real, W: Write>(net: &Network<T>, mut out: W) -> Result<()> {
    let mut header = format!("{MAGIC}\n");
    let dims: Vec<String> = net.input_shape().iter().map(|d| d.to_string()).collect();
    header.push_str(&format!("input {}\nclasses {}\nlayers {}\n", dims.join(","), net.num_classes(), net.layers().len()));
    for layer in net.layers() {
        let line = match layer {
            Layer::Dense { weight, .. } => format!("dense {} {}", weight.shape()[0], weight.shape()[1]),
            Layer::Conv2d { weight, stride, padding, .. } => {
                let s = weight.shape();
                let pad = match padding {
                    Padding::Valid => "valid",
                    Padding::Same => "same",
                };
                format!("conv2d {} {} {} {} {stride} {pad}", s[0], s[1], s[2], s[3])
            }
            Layer::Relu => "relu".into(),
            Layer::AvgPool2d { size, stride } => format!("avgpool2d {size} {stride}"),
            Layer::Flatten => "flatten".into(),
        };
        header.push_str(&line);
        header.push('\n');
    }
    header.push_str("end\n");
    out.write_all(header.as_bytes())?;
    for (w, b) in net.layers().iter().filter_map(|l| l.params()) {
        for v in w.data().iter().chain(b.data()) {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead> Reader<R> {
    fn line(&mut self) -> Result<String> {
        let mut buf = Vec::new();
        let n = self.inner.read_until(b'\n', &mut buf)?;
        if n == 0 || buf.last() != Some(&b'\n') {
            return Err(self.err("unexpected end of header"));
        }
        self.offset += n as u64;
        buf.pop();
        String::from_utf8(buf).map_err(|_| self.err("header is not UTF-8"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format { offset: self.offset, msg: msg.into() }
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let line = self.line()?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_owned)
            .ok_or_else(|| self.err(format!("expected `{key} ...`, found `{line}`")))
    }

    fn num(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(format!("bad integer `{s}`")))
    }

    fn tensor<T: Real>(&mut self, shape: Vec<usize>) -> Result<Tensor<T>> {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut bytes = [0u8; 8];
        for _ in 0..len {
            self.inner.read_exact(&mut bytes).map_err(|_| self.err("truncated parameter data"))?;
            self.offset += 8;
            data.push(T::lit(f64::from_le_bytes(bytes)));
        }
        Tensor::new(shape, data).map_err(|e| self.err(e.to_string()))
    }
}

enum Pending {
    Dense(usize, usize),
    Conv(usize, usize, usize, usize, usize, Padding),
    Relu,
    Pool(usize, usize),
    Flatten,
}

pub fn read_network<T: Real, R: BufRead>(input: R) -> Result<Network<T>> {
    let mut r = Reader { inner: input, offset: 0 };
    let magic = r.line()?;
    if magic != MAGIC {
        return Err(Error::Format { offset: 0, msg: format!("bad magic `{magic}`") });
    }
    let dims = r.keyed("input")?;
    let input_shape = dims.split(',').map(|d| r.num(d)).collect::<Result<Vec<_>>>()?;
    let classes = r.keyed("classes")?;
    let classes = r.num(&classes)?;
    let count = r.keyed("layers")?;
    let count = r.num(&count)?;
    let mut pending = Vec::with_capacity(count);
    for _ in 0..count {
        let line = r.line()?;
        let parts: Vec<&str> = line.split(' ').collect();
        let p = match parts.as_slice() {
            ["dense", o, i] => Pending::Dense(r.num(o)?, r.num(i)?),
            ["conv2d", o, i, kh, kw, s, pad] => {
                let pad = match *pad {
                    "valid" => Padding::Valid,
                    "same" => Padding::Same,
                    other => return Err(r.err(format!("unknown padding `{other}`"))),
                };
                Pending::Conv(r.num(o)?, r.num(i)?, r.num(kh)?, r.num(kw)?, r.num(s)?, pad)
            }
            ["relu"] => Pending::Relu,
            ["avgpool2d", k, s] => Pending::Pool(r.num(k)?, r.num(s)?),
            ["flatten"] => Pending::Flatten,
            _ => return Err(r.err(format!("unknown layer line `{line}`"))),
        };
        pending.push(p);
    }
    if r.line()? != "end" {
        return Err(r.err("expected `end`"));
    }
    let mut layers = Vec::with_capacity(count);
    for p in pending {
        layers.push(match p {
            Pending::Dense(o, i) => Layer::Dense { weight: r.tensor(vec![o, i])?, bias: r.tensor(vec![o])? },
            Pending::Conv(o, i, kh, kw, stride, padding) => Layer::Conv2d {
                weight: r.tensor(vec![o, i, kh, kw])?,
                bias: r.tensor(vec![o])?,
                stride,
                padding,
            },
            Pending::Relu => Layer::Relu,
            Pending::Pool(size, stride) => Layer::AvgPool2d { size, stride },
            Pending::Flatten => Layer::Flatten,
        });
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(r.err("trailing bytes after parameters"));
    }
    Network::new(input_shape, layers, classes)
}

pub fn save_network<T: Real>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_network(net, std::io::BufWriter::new(file))
}

pub fn load_network<T: Real>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let file = std::fs::File::open(path)?;
    read_network(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{desk_architecture, LayerSpec};
    use proptest::prelude::*;

    #[test]
    fn desk_network_round_trips_bit_exact() {
        let net = Network::<f64>::init(&desk_architecture(10), &[3, 32, 32], 10, 4).unwrap();
        let mut bytes = Vec::new();
        write_network(&net, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"FENET1\n"));
        let back: Network<f64> = read_network(bytes.as_slice()).unwrap();
        assert_eq!(back, net);
        let mut again = Vec::new();
        write_network(&back, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let net = Network::<f64>::init(&[LayerSpec::Dense { units: 2 }], &[3], 2, 0).unwrap();
        let mut bytes = Vec::new();
        write_network(&net, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        match read_network::<f64, _>(bytes.as_slice()) {
            Err(Error::Format { offset, .. }) => assert!(offset > 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(read_network::<f64, _>(&b"FENET2\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_weights_round_trip(seed in any::<u64>(), hidden in 1usize..6, scale in -1e6f64..1e6) {
            let mut net = Network::<f64>::init(
                &[LayerSpec::Dense { units: hidden }, LayerSpec::Relu, LayerSpec::Dense { units: 3 }],
                &[4], 3, seed,
            ).unwrap();
            for t in net.param_tensors_mut() {
                t.scale(scale);
            }
            let mut bytes = Vec::new();
            write_network(&net, &mut bytes).unwrap();
            let back: Network<f64> = read_network(bytes.as_slice()).unwrap();
            for (a, b) in back.layers().iter().zip(net.layers()) {
                if let (Some((wa, ba)), Some((wb, bb))) = (a.params(), b.params()) {
                    prop_assert!(wa.data().iter().zip(wb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
                    prop_assert!(ba.data().iter().zip(bb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
                }
            }
        }
    }
}

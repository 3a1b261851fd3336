//! The toolkit's versioned binary container: a magic string, a format
//! version, a metadata key/value block and a list of typed sections
//! (float images, dictionaries, model checkpoints, text reports). All
//! numeric payloads are little-endian 64-bit floats and round-trip
//! bit-exactly.

use crate::dict::LocalDictionary;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::lista::{AdamState, ListaGrads, ListaParams, TrainerState};
use std::io::Write as _;
use std::path::Path;

pub const MAGIC: &[u8; 6] = b"CSCBOX";
pub const FORMAT_VERSION: u16 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_FLOAT_IMAGE: u8 = 1;
const KIND_DICTIONARY: u8 = 2;
const KIND_CHECKPOINT: u8 = 3;
const KIND_REPORT: u8 = 4;

#[derive(Debug, Clone, Default)]
pub struct Container {
    pub metadata: Vec<(String, String)>,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone)]
pub enum Section {
    FloatImage {
        name: String,
        image: Image<f64>,
    },
    Dictionary {
        name: String,
        dict: LocalDictionary<f64>,
        provenance: String,
    },
    Checkpoint {
        name: String,
        checkpoint: Checkpoint,
    },
    Report {
        name: String,
        text: String,
    },
}

impl Section {
    pub fn name(&self) -> &str {
        match self {
            Section::FloatImage { name, .. }
            | Section::Dictionary { name, .. }
            | Section::Checkpoint { name, .. }
            | Section::Report { name, .. } => name,
        }
    }
}

/// Optimizer state stored alongside a checkpoint so training can resume
/// exactly where it stopped.
#[derive(Debug, Clone)]
pub struct TrainerSnapshot {
    pub epochs_done: u64,
    pub step: u64,
    pub m: ListaGrads<f64>,
    pub v: ListaGrads<f64>,
}

/// A serialized model: parameters, the training parameter record, and an
/// optional trainer snapshot.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ListaParams<f64>,
    pub config_echo: String,
    pub trainer: Option<TrainerSnapshot>,
}

impl Checkpoint {
    pub fn from_state(state: &TrainerState<f64>, config_echo: String) -> Self {
        Checkpoint {
            params: state.params.clone(),
            config_echo,
            trainer: Some(TrainerSnapshot {
                epochs_done: state.epochs_done as u64,
                step: state.adam.t,
                m: state.adam.m.clone(),
                v: state.adam.v.clone(),
            }),
        }
    }

    /// Rebuild a trainer; fresh optimizer state when none was stored.
    pub fn into_state(self) -> TrainerState<f64> {
        match self.trainer {
            Some(snap) => TrainerState {
                adam: AdamState {
                    m: snap.m,
                    v: snap.v,
                    t: snap.step,
                },
                epochs_done: snap.epochs_done as usize,
                params: self.params,
            },
            None => TrainerState::fresh(self.params),
        }
    }
}

// ---- encoding ----

fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64_slice(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn encode_grads(out: &mut Vec<u8>, g: &ListaGrads<f64>) {
    put_f64_slice(out, &g.analysis);
    put_f64_slice(out, &g.synthesis);
    put_f64_slice(out, &g.decoder);
    put_f64_slice(out, &g.thresholds);
    put_f64_slice(out, &[g.step_scale]);
}

fn encode_section_payload(section: &Section) -> Vec<u8> {
    let mut p = Vec::new();
    match section {
        Section::FloatImage { image, .. } => {
            put_u64(&mut p, image.height() as u64);
            put_u64(&mut p, image.width() as u64);
            put_f64_slice(&mut p, image.data());
        }
        Section::Dictionary {
            dict, provenance, ..
        } => {
            put_u64(&mut p, dict.patch_h() as u64);
            put_u64(&mut p, dict.patch_w() as u64);
            put_u64(&mut p, dict.num_atoms() as u64);
            put_f64_slice(&mut p, dict.atoms());
            put_str(&mut p, provenance);
        }
        Section::Checkpoint { checkpoint, .. } => {
            let params = &checkpoint.params;
            put_u32(&mut p, CHECKPOINT_VERSION);
            put_u64(&mut p, params.num_filters() as u64);
            put_u64(&mut p, params.filter_side() as u64);
            put_u64(&mut p, params.stride() as u64);
            put_u64(&mut p, params.layers() as u64);
            put_f64_slice(&mut p, params.analysis().atoms());
            put_f64_slice(&mut p, params.synthesis().atoms());
            put_f64_slice(&mut p, params.decoder().atoms());
            put_f64_slice(&mut p, params.thresholds());
            put_f64_slice(&mut p, &[params.step_scale()]);
            put_str(&mut p, &checkpoint.config_echo);
            match &checkpoint.trainer {
                Some(snap) => {
                    p.push(1);
                    put_u64(&mut p, snap.epochs_done);
                    put_u64(&mut p, snap.step);
                    encode_grads(&mut p, &snap.m);
                    encode_grads(&mut p, &snap.v);
                }
                None => p.push(0),
            }
        }
        Section::Report { text, .. } => {
            put_str(&mut p, text);
        }
    }
    p
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u16(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.metadata.len() as u32);
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.sections.len() as u32);
        for section in &self.sections {
            let kind = match section {
                Section::FloatImage { .. } => KIND_FLOAT_IMAGE,
                Section::Dictionary { .. } => KIND_DICTIONARY,
                Section::Checkpoint { .. } => KIND_CHECKPOINT,
                Section::Report { .. } => KIND_REPORT,
            };
            out.push(kind);
            put_str(&mut out, section.name());
            let payload = encode_section_payload(section);
            put_u64(&mut out, payload.len() as u64);
            out.extend_from_slice(&payload);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Container> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(6)?;
        if magic != MAGIC {
            return Err(Error::format("bad container magic"));
        }
        let version = cur.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported container version {version}"
            )));
        }
        let meta_count = cur.u32()? as usize;
        let mut metadata = Vec::with_capacity(meta_count);
        for _ in 0..meta_count {
            let k = cur.string()?;
            let v = cur.string()?;
            metadata.push((k, v));
        }
        let section_count = cur.u32()? as usize;
        let mut sections = Vec::with_capacity(section_count);
        for _ in 0..section_count {
            let kind = cur.u8()?;
            let name = cur.string()?;
            let payload_len = cur.u64()? as usize;
            let payload = cur.take(payload_len)?;
            let mut pc = Cursor {
                bytes: payload,
                pos: 0,
            };
            let section = match kind {
                KIND_FLOAT_IMAGE => {
                    let h = pc.u64()? as usize;
                    let w = pc.u64()? as usize;
                    let data = pc.f64_vec(h * w)?;
                    Section::FloatImage {
                        name,
                        image: Image::from_vec(h, w, data)?,
                    }
                }
                KIND_DICTIONARY => {
                    let ph = pc.u64()? as usize;
                    let pw = pc.u64()? as usize;
                    let m = pc.u64()? as usize;
                    let atoms = pc.f64_vec(ph * pw * m)?;
                    let provenance = pc.string()?;
                    Section::Dictionary {
                        name,
                        dict: LocalDictionary::with_shape(ph, pw, m, atoms)?,
                        provenance,
                    }
                }
                KIND_CHECKPOINT => {
                    let ckpt_version = pc.u32()?;
                    if ckpt_version != CHECKPOINT_VERSION {
                        return Err(Error::format(format!(
                            "unsupported checkpoint version {ckpt_version}"
                        )));
                    }
                    let m = pc.u64()? as usize;
                    let side = pc.u64()? as usize;
                    let stride = pc.u64()? as usize;
                    let layers = pc.u64()? as usize;
                    let n = side * side;
                    let analysis = LocalDictionary::new(side, m, pc.f64_vec(n * m)?)?;
                    let synthesis = LocalDictionary::new(side, m, pc.f64_vec(n * m)?)?;
                    let decoder = LocalDictionary::new(side, m, pc.f64_vec(n * m)?)?;
                    let thresholds = pc.f64_vec(m)?;
                    let step_scale = pc.f64()?;
                    let config_echo = pc.string()?;
                    let params = ListaParams::from_parts(
                        analysis, synthesis, decoder, thresholds, step_scale, stride, layers,
                    )?;
                    let trainer = if pc.u8()? == 1 {
                        let epochs_done = pc.u64()?;
                        let step = pc.u64()?;
                        let mut grads = || -> Result<ListaGrads<f64>> {
                            Ok(ListaGrads {
                                analysis: pc.f64_vec(n * m)?,
                                synthesis: pc.f64_vec(n * m)?,
                                decoder: pc.f64_vec(n * m)?,
                                thresholds: pc.f64_vec(m)?,
                                step_scale: pc.f64()?,
                            })
                        };
                        let m_rec = grads()?;
                        let v_rec = grads()?;
                        Some(TrainerSnapshot {
                            epochs_done,
                            step,
                            m: m_rec,
                            v: v_rec,
                        })
                    } else {
                        None
                    };
                    Section::Checkpoint {
                        name,
                        checkpoint: Checkpoint {
                            params,
                            config_echo,
                            trainer,
                        },
                    }
                }
                KIND_REPORT => Section::Report {
                    name,
                    text: pc.string()?,
                },
                other => {
                    return Err(Error::format(format!("unknown section kind {other}")));
                }
            };
            sections.push(section);
        }
        Ok(Container { metadata, sections })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Container> {
        let bytes = std::fs::read(path)?;
        Container::from_bytes(&bytes)
    }

    /// Atomic write (temp file + rename) so identical re-runs can be
    /// compared byte for byte.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("csc.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name() == name)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("container truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format("invalid utf8 in container"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{streams, StreamRng};

    #[test]
    fn image_and_dictionary_round_trip_bit_exact() {
        let mut rng = StreamRng::new(1, streams::GENERIC);
        let image = Image::from_fn(5, 9, |_, _| rng.normal() * 1e3);
        let dict = LocalDictionary::<f64>::overcomplete_dct(3, 5).unwrap();
        let c = Container {
            metadata: vec![("tool".into(), "csc".into()), ("seed".into(), "7".into())],
            sections: vec![
                Section::FloatImage {
                    name: "noisy".into(),
                    image: image.clone(),
                },
                Section::Dictionary {
                    name: "dct".into(),
                    dict: dict.clone(),
                    provenance: "overcomplete_dct(3,5)".into(),
                },
                Section::Report {
                    name: "log".into(),
                    text: "psnr=12.5\n".into(),
                },
            ],
        };
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back.meta("seed"), Some("7"));
        match back.find("noisy").unwrap() {
            Section::FloatImage { image: img2, .. } => {
                for (a, b) in image.data().iter().zip(img2.data()) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            _ => panic!("wrong section"),
        }
        match back.find("dct").unwrap() {
            Section::Dictionary {
                dict: d2,
                provenance,
                ..
            } => {
                assert_eq!(d2.atoms(), dict.atoms());
                assert_eq!(provenance, "overcomplete_dct(3,5)");
            }
            _ => panic!("wrong section"),
        }
        // Serialization is a pure function.
        assert_eq!(bytes, back.to_bytes());
    }

    #[test]
    fn checkpoint_round_trip_with_trainer_state() {
        let params = ListaParams::<f64>::init(5, 4, 3, 2, 3, (8, 8)).unwrap();
        let state = TrainerState::fresh(params);
        let ckpt = Checkpoint::from_state(&state, "sigma=25\n".into());
        let c = Container {
            metadata: vec![],
            sections: vec![Section::Checkpoint {
                name: "model".into(),
                checkpoint: ckpt,
            }],
        };
        let back = Container::from_bytes(&c.to_bytes()).unwrap();
        match back.find("model").unwrap() {
            Section::Checkpoint { checkpoint, .. } => {
                assert_eq!(
                    checkpoint.params.analysis().atoms(),
                    state.params.analysis().atoms()
                );
                assert_eq!(checkpoint.config_echo, "sigma=25\n");
                let restored = checkpoint.clone().into_state();
                assert_eq!(restored.epochs_done, 0);
                assert_eq!(restored.adam.t, 0);
            }
            _ => panic!("wrong section"),
        }
    }

    #[test]
    fn rejects_corruption() {
        assert!(Container::from_bytes(b"NOTBOX").is_err());
        let c = Container::default();
        let mut bytes = c.to_bytes();
        bytes[0] = b'X';
        assert!(Container::from_bytes(&bytes).is_err());
        let good = c.to_bytes();
        assert!(Container::from_bytes(&good[..good.len() - 1]).is_err() || good.len() == 12);
    }
}

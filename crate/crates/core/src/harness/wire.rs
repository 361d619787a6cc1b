use crate::coordinator::AllocationPlan;
use crate::error::{Error, Result};
use crate::feature::{PatchGrid, Plane};
use crate::sender::{
    ChannelSaliencyMap, FeatureMessage, ImportanceBundle, PayloadBlock, SpatialImportanceMap,
};

pub const WIRE_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;
/// Receiver id of a message addressed to every collaborator.
pub const BROADCAST: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Metadata = 1,
    Plan = 2,
    Payload = 3,
}

impl MessageKind {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Self::Metadata),
            2 => Some(Self::Plan),
            3 => Some(Self::Payload),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub version: u8,
    pub round: u32,
    pub sender: u16,
    pub receiver: u16,
    pub kind: MessageKind,
    pub body_length: u32,
}

/// Importance metadata as carried on the wire (single precision).
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataBody {
    pub height: u16,
    pub width: u16,
    pub patch_size: u16,
    /// `height × width`, row-major.
    pub spatial: Vec<f32>,
    /// `(height / P) × (width / P)`, row-major.
    pub saliency: Vec<f32>,
}

/// Grant matrix, `agents × patches` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanBody {
    pub grants: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireBlock {
    pub patch: u16,
    pub channel: u16,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayloadBody {
    pub blocks: Vec<WireBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Metadata(MetadataBody),
    Plan(PlanBody),
    Payload(PayloadBody),
}

impl Body {
    pub fn kind(&self) -> MessageKind {
        match self {
            Body::Metadata(_) => MessageKind::Metadata,
            Body::Plan(_) => MessageKind::Plan,
            Body::Payload(_) => MessageKind::Payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub round: u32,
    pub sender: u16,
    pub receiver: u16,
    pub body: Body,
}

fn narrow(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::Encode(format!("{what} {v} exceeds 65535")))
}

impl MetadataBody {
    pub fn from_bundle(bundle: &ImportanceBundle) -> Result<Self> {
        let (height, width) = bundle.spatial.values.shape();
        let p = bundle.saliency.patch_size;
        Ok(Self {
            height: narrow(height, "height")?,
            width: narrow(width, "width")?,
            patch_size: narrow(p, "patch size")?,
            spatial: bundle.spatial.values.as_slice().iter().map(|&v| v as f32).collect(),
            saliency: bundle.saliency.values.as_slice().iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn into_bundle(self, agent_id: u16) -> Result<ImportanceBundle> {
        let (h, w, p) = (self.height as usize, self.width as usize, self.patch_size as usize);
        let grid = PatchGrid::new(h, w, p).map_err(|e| Error::Decode(e.to_string()))?;
        let spatial = Plane::from_vec(h, w, self.spatial.into_iter().map(f64::from).collect())
            .map_err(|e| Error::Decode(e.to_string()))?;
        let saliency =
            Plane::from_vec(grid.rows(), grid.cols(), self.saliency.into_iter().map(f64::from).collect())
                .map_err(|e| Error::Decode(e.to_string()))?;
        Ok(ImportanceBundle {
            agent_id,
            spatial: SpatialImportanceMap { agent_id, values: spatial },
            saliency: ChannelSaliencyMap { agent_id, patch_size: p, values: saliency },
        })
    }
}

impl PlanBody {
    pub fn from_plan(plan: &AllocationPlan) -> Result<Self> {
        let grants = plan
            .grants
            .iter()
            .map(|&g| u16::try_from(g).map_err(|_| Error::Encode(format!("grant {g} exceeds 65535"))))
            .collect::<Result<_>>()?;
        Ok(Self { grants })
    }

    /// Rebuilds the plan for the given collaborator ordering and patch count.
    pub fn into_plan(self, round_id: u32, agent_ids: Vec<u16>, patches: usize) -> Result<AllocationPlan> {
        if self.grants.len() != agent_ids.len() * patches {
            return Err(Error::Decode(format!(
                "plan carries {} grants, expected {} agents × {patches} patches",
                self.grants.len(),
                agent_ids.len()
            )));
        }
        let mut plan = AllocationPlan::empty(round_id, agent_ids, patches);
        plan.grants = self.grants.into_iter().map(u32::from).collect();
        Ok(plan)
    }
}

impl PayloadBody {
    pub fn from_message(msg: &FeatureMessage) -> Result<Self> {
        let blocks = msg
            .blocks
            .iter()
            .map(|b| {
                Ok(WireBlock {
                    patch: narrow(b.patch, "patch index")?,
                    channel: narrow(b.channel, "channel index")?,
                    values: b.values.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub fn into_message(self) -> FeatureMessage {
        FeatureMessage {
            blocks: self
                .blocks
                .into_iter()
                .map(|b| PayloadBlock { patch: b.patch as usize, channel: b.channel as usize, values: b.values })
                .collect(),
        }
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode_body(body: &Body) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match body {
        Body::Metadata(m) => {
            let (h, w, p) = (m.height as usize, m.width as usize, m.patch_size as usize);
            if p == 0 || h % p != 0 || w % p != 0 {
                return Err(Error::Encode(format!("patch size {p} does not tile {h}×{w}")));
            }
            if m.spatial.len() != h * w || m.saliency.len() != (h / p) * (w / p) {
                return Err(Error::Encode("metadata grids do not match the declared shape".into()));
            }
            for v in [m.height, m.width, m.patch_size] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            put_f32s(&mut out, &m.spatial);
            put_f32s(&mut out, &m.saliency);
        }
        Body::Plan(p) => {
            for g in &p.grants {
                out.extend_from_slice(&g.to_le_bytes());
            }
        }
        Body::Payload(p) => {
            let count = u32::try_from(p.blocks.len())
                .map_err(|_| Error::Encode("too many payload blocks".into()))?;
            out.extend_from_slice(&count.to_le_bytes());
            let area = p.blocks.first().map_or(0, |b| b.values.len());
            for b in &p.blocks {
                if b.values.len() != area || area == 0 {
                    return Err(Error::Encode("payload blocks must share one nonzero tile size".into()));
                }
                out.extend_from_slice(&b.patch.to_le_bytes());
                out.extend_from_slice(&b.channel.to_le_bytes());
                put_f32s(&mut out, &b.values);
            }
        }
    }
    Ok(out)
}

/// Serializes `msg` to its little-endian wire form.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>> {
    let body = encode_body(&msg.body)?;
    let body_length =
        u32::try_from(body.len()).map_err(|_| Error::Encode("body longer than 4 GiB".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(WIRE_VERSION);
    out.extend_from_slice(&msg.round.to_le_bytes());
    out.extend_from_slice(&msg.sender.to_le_bytes());
    out.extend_from_slice(&msg.receiver.to_le_bytes());
    out.push(msg.body.kind() as u8);
    out.extend_from_slice(&body_length.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::Decode(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        (0..n).map(|_| Ok(f32::from_le_bytes(self.take()?))).collect()
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    let mut r = Reader { bytes, pos: 0 };
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(Error::Decode(format!("unsupported wire version {version}")));
    }
    let round = r.u32()?;
    let sender = r.u16()?;
    let receiver = r.u16()?;
    let kind_byte = r.u8()?;
    let kind = MessageKind::from_byte(kind_byte)
        .ok_or_else(|| Error::Decode(format!("unknown message kind {kind_byte}")))?;
    let body_length = r.u32()?;
    Ok(Header { version, round, sender, receiver, kind, body_length })
}

/// Parses one complete message; trailing or missing bytes are errors.
pub fn decode(bytes: &[u8]) -> Result<WireMessage> {
    let header = decode_header(bytes)?;
    let body_bytes = &bytes[HEADER_LEN..];
    if body_bytes.len() != header.body_length as usize {
        return Err(Error::Decode(format!(
            "header declares {} body bytes, found {}",
            header.body_length,
            body_bytes.len()
        )));
    }
    let mut r = Reader { bytes: body_bytes, pos: 0 };
    let body = match header.kind {
        MessageKind::Metadata => {
            let (height, width, patch_size) = (r.u16()?, r.u16()?, r.u16()?);
            let (h, w, p) = (height as usize, width as usize, patch_size as usize);
            if p == 0 || h % p != 0 || w % p != 0 {
                return Err(Error::Decode(format!("patch size {p} does not tile {h}×{w}")));
            }
            let spatial = r.f32s(h * w)?;
            let saliency = r.f32s((h / p) * (w / p))?;
            Body::Metadata(MetadataBody { height, width, patch_size, spatial, saliency })
        }
        MessageKind::Plan => {
            if !body_bytes.len().is_multiple_of(2) {
                return Err(Error::Decode("plan body has odd length".into()));
            }
            let grants = (0..body_bytes.len() / 2).map(|_| r.u16()).collect::<Result<_>>()?;
            Body::Plan(PlanBody { grants })
        }
        MessageKind::Payload => {
            let count = r.u32()? as usize;
            let rest = r.remaining();
            if count == 0 && rest != 0 {
                return Err(Error::Decode("empty payload with trailing bytes".into()));
            }
            let per_block = if count == 0 { 0 } else { rest / count };
            if count > 0 && (!rest.is_multiple_of(count) || per_block <= 4 || (per_block - 4) % 4 != 0) {
                return Err(Error::Decode(format!("{rest} bytes cannot hold {count} equal blocks")));
            }
            let area = per_block.saturating_sub(4) / 4;
            let mut blocks = Vec::with_capacity(count);
            for _ in 0..count {
                let patch = r.u16()?;
                let channel = r.u16()?;
                blocks.push(WireBlock { patch, channel, values: r.f32s(area)? });
            }
            Body::Payload(PayloadBody { blocks })
        }
    };
    if r.remaining() != 0 {
        return Err(Error::Decode(format!("{} trailing body bytes", r.remaining())));
    }
    Ok(WireMessage { round: header.round, sender: header.sender, receiver: header.receiver, body })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn msg(body: Body) -> WireMessage {
        WireMessage { round: 7, sender: 2, receiver: 0, body }
    }

    #[test]
    fn empty_payload_is_eighteen_bytes() {
        let bytes = encode(&msg(Body::Payload(PayloadBody { blocks: vec![] }))).unwrap();
        assert_eq!(bytes.len(), 18);
        assert_eq!(&bytes[14..], &[0, 0, 0, 0]);
    }

    #[test]
    fn one_block_of_four_values_has_a_24_byte_body() {
        let block = WireBlock { patch: 3, channel: 1, values: vec![1.0, -2.0, 0.5, 4.0] };
        let bytes = encode(&msg(Body::Payload(PayloadBody { blocks: vec![block] }))).unwrap();
        assert_eq!(bytes.len() - HEADER_LEN, 24);
        assert_eq!(decode_header(&bytes).unwrap().body_length, 24);
    }

    #[test]
    fn header_layout_is_little_endian() {
        let m = WireMessage { round: 0x0102_0304, sender: 0x0506, receiver: 0x0708, body: Body::Plan(PlanBody { grants: vec![0x0a0b] }) };
        let bytes = encode(&m).unwrap();
        assert_eq!(bytes, vec![1, 4, 3, 2, 1, 6, 5, 8, 7, 2, 2, 0, 0, 0, 0x0b, 0x0a]);
    }

    #[test]
    fn grant_overflow_is_an_encoding_error() {
        let mut plan = AllocationPlan::empty(0, vec![1], 2);
        plan.grants = vec![65_536, 0];
        assert!(matches!(PlanBody::from_plan(&plan), Err(Error::Encode(_))));
        plan.grants = vec![65_535, 0];
        assert!(PlanBody::from_plan(&plan).is_ok());
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let bytes = encode(&msg(Body::Plan(PlanBody { grants: vec![1, 2] }))).unwrap();
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[0] = 9;
        assert!(decode(&wrong_version).is_err());
        let mut wrong_kind = bytes.clone();
        wrong_kind[9] = 4;
        assert!(decode(&wrong_kind).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }

    fn f32s(n: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-1e6f32..1e6, n)
    }

    fn body() -> impl Strategy<Value = Body> {
        let metadata = (1u16..4, 1u16..4, prop::sample::select(vec![1u16, 2, 4])).prop_flat_map(|(r, c, p)| {
            let (h, w) = (r * p, c * p);
            (f32s(h as usize * w as usize), f32s(r as usize * c as usize)).prop_map(move |(spatial, saliency)| {
                Body::Metadata(MetadataBody { height: h, width: w, patch_size: p, spatial, saliency })
            })
        });
        let plan = prop::collection::vec(any::<u16>(), 0..40).prop_map(|grants| Body::Plan(PlanBody { grants }));
        let payload = (prop::sample::select(vec![1usize, 4, 16]), 0usize..12).prop_flat_map(|(area, n)| {
            prop::collection::vec((any::<u16>(), any::<u16>(), f32s(area)), n).prop_map(|blocks| {
                Body::Payload(PayloadBody {
                    blocks: blocks.into_iter().map(|(patch, channel, values)| WireBlock { patch, channel, values }).collect(),
                })
            })
        });
        prop_oneof![metadata, plan, payload]
    }

    proptest! {
        #[test]
        fn round_trip(round in any::<u32>(), sender in any::<u16>(), receiver in any::<u16>(), body in body()) {
            let m = WireMessage { round, sender, receiver, body };
            let bytes = encode(&m).unwrap();
            prop_assert_eq!(decode_header(&bytes).unwrap().body_length as usize, bytes.len() - HEADER_LEN);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(encode(&back).unwrap(), bytes);
            prop_assert_eq!(back, m);
        }
    }
}

use super::{LayerKind, NetError, NetworkSpec};
use crate::cost;
use crate::ops::FuseVariant;
use crate::sim::ArrayConfig;

/// Share of depthwise separable layers a transformation replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fraction {
    All,
    /// Half of the depthwise layers, rounded down, chosen by latency saving.
    Half,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transformed {
    pub net: NetworkSpec,
    /// Names of the replaced layers, in network order.
    pub replaced: Vec<String>,
}

fn fuse_kind(variant: FuseVariant) -> LayerKind {
    match variant {
        FuseVariant::Full => LayerKind::FuSeFull,
        FuseVariant::Half => LayerKind::FuSeHalf,
    }
}

/// [`transform_fuse_on`] with the partial selection ranked on a 64x64 array.
pub fn transform_fuse(net: &NetworkSpec, variant: FuseVariant, fraction: Fraction) -> Result<Transformed, NetError> {
    transform_fuse_on(net, variant, fraction, &ArrayConfig::square(64))
}

/// Replaces depthwise separable layers with the FuSe kind of `variant`.
///
/// For [`Fraction::Half`] the layers with the largest latency saving on
/// `cfg` are replaced; ties go to the earlier layer. All other layers are
/// copied unchanged.
pub fn transform_fuse_on(
    net: &NetworkSpec,
    variant: FuseVariant,
    fraction: Fraction,
    cfg: &ArrayConfig,
) -> Result<Transformed, NetError> {
    let candidates: Vec<usize> = net
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind == LayerKind::DepthwiseSeparable)
        .map(|(i, _)| i)
        .collect();
    if candidates.is_empty() {
        return Err(NetError::NoDepthwise(net.name.clone()));
    }
    let kind = fuse_kind(variant);
    let mut chosen = match fraction {
        Fraction::All => candidates,
        Fraction::Half => {
            let mut ranked = Vec::with_capacity(candidates.len());
            for &i in &candidates {
                let base = &net.layers[i];
                let mut fused = base.clone();
                fused.kind = kind;
                let estimate = |l| cost::analytical_cycles(l, cfg).map_err(|e| NetError::Estimate(e.to_string()));
                let saving = estimate(base)? as i128 - estimate(&fused)? as i128;
                ranked.push((saving, i));
            }
            ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let keep = ranked.len() / 2;
            ranked.into_iter().take(keep).map(|(_, i)| i).collect()
        }
    };
    chosen.sort_unstable();
    let mut out = net.clone();
    for &i in &chosen {
        out.layers[i].kind = kind;
    }
    out.validate()?;
    let replaced = chosen.iter().map(|&i| out.layers[i].name.clone()).collect();
    Ok(Transformed { net: out, replaced })
}

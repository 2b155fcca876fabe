//! Grid-shaped feature maps: block downscaling and LI/HI pairing.

use crate::error::{Error, Result};
use crate::record::{Domain, FeatureRecord, ProbabilityVector};

/// Row-major feature map; `records[r * width + c]` has coord `(r, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    height: usize,
    width: usize,
    domain: Domain,
    records: Vec<FeatureRecord>,
}

impl FeatureGrid {
    /// Builds a grid, filling in coords. Records that already carry a
    /// coord must carry the one matching their position.
    pub fn new(height: usize, width: usize, domain: Domain, mut records: Vec<FeatureRecord>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::validation("grid dimensions must be positive"));
        }
        if records.len() != height * width {
            return Err(Error::validation(format!(
                "{}x{} grid needs {} records, got {}",
                height,
                width,
                height * width,
                records.len()
            )));
        }
        crate::record::check_consistent(&records)?;
        for (i, r) in records.iter_mut().enumerate() {
            if r.domain != domain {
                return Err(Error::validation(format!("record {i} is {}, grid is {domain}", r.domain)));
            }
            let want = ((i / width) as u32, (i % width) as u32);
            match r.coord {
                Some(c) if c != want => {
                    return Err(Error::validation(format!("record {i} has coord {c:?}, expected {want:?}")));
                }
                _ => r.coord = Some(want),
            }
        }
        Ok(Self { height, width, domain, records })
    }

    /// Orders arbitrary records by their coords. Every cell must be covered
    /// exactly once.
    pub fn from_coords(height: usize, width: usize, domain: Domain, records: Vec<FeatureRecord>) -> Result<Self> {
        let mut slots: Vec<Option<FeatureRecord>> = vec![None; height * width];
        for r in records {
            let (row, col) = r.coord.ok_or_else(|| Error::validation("grid record without coord"))?;
            let (row, col) = (row as usize, col as usize);
            if row >= height || col >= width {
                return Err(Error::validation(format!("coord ({row}, {col}) outside {height}x{width}")));
            }
            let slot = &mut slots[row * width + col];
            if slot.is_some() {
                return Err(Error::validation(format!("duplicate coord ({row}, {col})")));
            }
            *slot = Some(r);
        }
        let records = slots
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::validation("grid has uncovered cells"))?;
        Self::new(height, width, domain, records)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<FeatureRecord> {
        self.records
    }

    pub fn get(&self, row: usize, col: usize) -> &FeatureRecord {
        &self.records[row * self.width + col]
    }

    /// Mean record of the `size`×`size` block whose top-left cell is
    /// `(row, col)`.
    fn block_mean(&self, row: usize, col: usize, size: usize) -> Result<FeatureRecord> {
        let first = self.get(row, col);
        let mut feats = vec![0.0; first.dim()];
        let mut probs = vec![0.0; first.n_classes()];
        let mut votes = vec![0usize; first.n_classes()];
        let mut labeled = 0usize;
        for r in row..row + size {
            for c in col..col + size {
                let rec = self.get(r, c);
                feats.iter_mut().zip(&rec.features).for_each(|(a, b)| *a += b);
                probs.iter_mut().zip(rec.probs.as_slice()).for_each(|(a, b)| *a += b);
                if let Some(y) = rec.label {
                    votes[y] += 1;
                    labeled += 1;
                }
            }
        }
        let m = (size * size) as f64;
        feats.iter_mut().for_each(|v| *v /= m);
        probs.iter_mut().for_each(|v| *v /= m);
        let mut out = FeatureRecord::new(feats, ProbabilityVector::normalized(probs)?, self.domain)?;
        if labeled > 0 {
            // majority vote, ties to the lowest class
            let best = votes.iter().enumerate().fold(0, |b, (i, &v)| if v > votes[b] { i } else { b });
            out = out.with_label(best)?;
        }
        Ok(out)
    }
}

/// Block-mean downscaling by `factor`. Features and probabilities are
/// averaged (probabilities renormalized), labels take the block majority.
/// Rows and columns that do not fill a whole block are dropped.
pub fn downscale_grid(grid: &FeatureGrid, factor: usize) -> Result<FeatureGrid> {
    if factor == 0 {
        return Err(Error::validation("downscale factor must be positive"));
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    let (h, w) = (grid.height / factor, grid.width / factor);
    if h == 0 || w == 0 {
        return Err(Error::validation(format!(
            "factor {factor} exceeds grid size {}x{}",
            grid.height, grid.width
        )));
    }
    if !grid.height.is_multiple_of(factor) || !grid.width.is_multiple_of(factor) {
        log::warn!(
            "{}x{} grid is not divisible by {factor}; edge cells are dropped",
            grid.height,
            grid.width
        );
    }
    let mut records = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            records.push(grid.block_mean(r * factor, c * factor, factor)?);
        }
    }
    FeatureGrid::new(h, w, grid.domain, records)
}

/// Pairs every LI cell with the mean of the `scale`×`scale` HI block
/// covering it. The HI record takes the LI cell's coord.
pub fn pair_grids(li: &FeatureGrid, hi: &FeatureGrid, scale: usize) -> Result<Vec<(FeatureRecord, FeatureRecord)>> {
    if scale == 0 {
        return Err(Error::validation("pairing scale must be positive"));
    }
    if li.domain != Domain::Li || hi.domain != Domain::Hi {
        return Err(Error::validation("pair_grids expects an LI grid and an HI grid"));
    }
    if hi.height != li.height * scale || hi.width != li.width * scale {
        return Err(Error::validation(format!(
            "HI grid {}x{} is not {scale}x the LI grid {}x{}",
            hi.height, hi.width, li.height, li.width
        )));
    }
    let mut pairs = Vec::with_capacity(li.records.len());
    for r in 0..li.height {
        for c in 0..li.width {
            let mut h = hi.block_mean(r * scale, c * scale, scale)?;
            h.coord = Some((r as u32, c as u32));
            pairs.push((li.get(r, c).clone(), h));
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(v: f64, domain: Domain) -> FeatureRecord {
        let p = ProbabilityVector::new(vec![0.25, 0.75]).unwrap();
        FeatureRecord::new(vec![v, -v], p, domain).unwrap()
    }

    fn grid(h: usize, w: usize, domain: Domain) -> FeatureGrid {
        let recs = (0..h * w).map(|i| rec(i as f64, domain)).collect();
        FeatureGrid::new(h, w, domain, recs).unwrap()
    }

    #[test]
    fn factor_one_is_identity() {
        let g = grid(3, 5, Domain::Li);
        assert_eq!(downscale_grid(&g, 1).unwrap(), g);
        assert!(downscale_grid(&g, 0).is_err());
    }

    #[test]
    fn identical_block_collapses() {
        let recs = vec![rec(2.5, Domain::Hi); 4];
        let g = FeatureGrid::new(2, 2, Domain::Hi, recs).unwrap();
        let d = downscale_grid(&g, 2).unwrap();
        assert_eq!(d.records().len(), 1);
        assert_eq!(d.get(0, 0).features, vec![2.5, -2.5]);
        assert_eq!(d.get(0, 0).coord, Some((0, 0)));
    }

    #[test]
    fn edges_truncated() {
        let d = downscale_grid(&grid(5, 7, Domain::Li), 2).unwrap();
        assert_eq!((d.height(), d.width()), (2, 3));
        // block (1, 2) covers rows 2..4, cols 4..6 of a width-7 grid
        let want = [18.0, 19.0, 25.0, 26.0].iter().sum::<f64>() / 4.0;
        assert_eq!(d.get(1, 2).features[0], want);
    }

    #[test]
    fn majority_label_ties_low() {
        let mut recs: Vec<FeatureRecord> = (0..4).map(|i| rec(i as f64, Domain::Li)).collect();
        for (r, y) in recs.iter_mut().zip([1, 0, 1, 0]) {
            r.label = Some(y);
        }
        let g = FeatureGrid::new(2, 2, Domain::Li, recs).unwrap();
        assert_eq!(downscale_grid(&g, 2).unwrap().get(0, 0).label, Some(0));
    }

    #[test]
    fn from_coords_rejects_gaps_and_duplicates() {
        let a = rec(0.0, Domain::Li).with_coord(0, 0);
        let b = rec(1.0, Domain::Li).with_coord(0, 0);
        assert!(FeatureGrid::from_coords(1, 2, Domain::Li, vec![a.clone(), b]).is_err());
        assert!(FeatureGrid::from_coords(1, 2, Domain::Li, vec![a.clone()]).is_err());
        let c = rec(1.0, Domain::Li).with_coord(0, 1);
        let g = FeatureGrid::from_coords(1, 2, Domain::Li, vec![c, a]).unwrap();
        assert_eq!(g.get(0, 0).features[0], 0.0);
    }

    #[test]
    fn pairing_dimension_mismatch() {
        let li = grid(2, 2, Domain::Li);
        assert!(pair_grids(&li, &grid(4, 5, Domain::Hi), 2).is_err());
        assert!(pair_grids(&li, &grid(4, 4, Domain::Li), 2).is_err());
        assert_eq!(pair_grids(&li, &grid(4, 4, Domain::Hi), 2).unwrap().len(), 4);
    }
}

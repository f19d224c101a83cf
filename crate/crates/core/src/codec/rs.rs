//! Systematic Reed-Solomon erasure code over GF(256).
//!
//! The generator is an n x k Vandermonde matrix on the points 0..n-1,
//! multiplied by the inverse of its top k x k block. The top block becomes
//! the identity and every k-row subset stays invertible.

use std::collections::{BTreeMap, HashMap};

use crate::gf256::{gf_pow, mul_add_slice, solve_linear_system, Matrix};

use super::{
    check_lengths, BlockCodeParams, CodecError, Recovered, RepairMeta, RepairSymbol, SchemeDecoder,
    SchemeEncoder, SchemeId,
};

/// Distinct evaluation points available in GF(256).
pub const MAX_RS_SYMBOLS: usize = 256;

pub fn rs_generator_matrix(params: BlockCodeParams) -> Result<Matrix, CodecError> {
    params.validate()?;
    let (n, k) = (params.n as usize, params.k as usize);
    if n > MAX_RS_SYMBOLS {
        return Err(CodecError::Capacity(format!(
            "n = {n} exceeds the {MAX_RS_SYMBOLS} evaluation points of GF(256)"
        )));
    }
    let mut v = Matrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            v.set(i, j, gf_pow(i as u8, j as u32));
        }
    }
    let top: Vec<usize> = (0..k).collect();
    let top_inv = v
        .select_rows(&top)
        .invert()
        .map_err(|e| CodecError::InvalidParams(e.to_string()))?;
    v.mul(&top_inv)
        .map_err(|e| CodecError::InvalidParams(e.to_string()))
}

/// One (n, k) code with its generator.
#[derive(Debug, Clone)]
pub struct ReedSolomon {
    params: BlockCodeParams,
    generator: Matrix,
}

impl ReedSolomon {
    pub fn new(params: BlockCodeParams) -> Result<Self, CodecError> {
        Ok(ReedSolomon {
            params,
            generator: rs_generator_matrix(params)?,
        })
    }

    pub fn params(&self) -> BlockCodeParams {
        self.params
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }

    /// Coefficient of source `j` in repair `r`.
    #[inline]
    pub fn repair_coef(&self, r: usize, j: usize) -> u8 {
        self.generator.get(self.params.k as usize + r, j)
    }

    /// The n - k repair payloads of one block.
    pub fn encode(&self, sources: &[&[u8]]) -> Result<Vec<Vec<u8>>, CodecError> {
        let k = self.params.k as usize;
        if sources.len() != k {
            return Err(CodecError::WrongSymbolCount {
                expected: k,
                found: sources.len(),
            });
        }
        let len = check_lengths(sources)?;
        let mut out = vec![vec![0u8; len]; self.params.repair_count()];
        for (r, rep) in out.iter_mut().enumerate() {
            for (j, s) in sources.iter().enumerate() {
                mul_add_slice(rep, s, self.repair_coef(r, j));
            }
        }
        Ok(out)
    }

    /// All k sources, given the surviving sources and repairs of a block.
    ///
    /// `sources` has k slots and `repairs` n - k slots; `None` marks an
    /// erasure.
    pub fn recover(
        &self,
        sources: &[Option<&[u8]>],
        repairs: &[Option<&[u8]>],
    ) -> Result<Vec<Vec<u8>>, CodecError> {
        let k = self.params.k as usize;
        if sources.len() != k || repairs.len() != self.params.repair_count() {
            return Err(CodecError::WrongSymbolCount {
                expected: self.params.n as usize,
                found: sources.len() + repairs.len(),
            });
        }
        let present: Vec<&[u8]> = sources.iter().chain(repairs).flatten().copied().collect();
        if present.is_empty() {
            return Err(CodecError::Unrecoverable {
                missing: (0..k).collect(),
            });
        }
        check_lengths(&present)?;
        let missing: Vec<usize> = (0..k).filter(|&j| sources[j].is_none()).collect();
        let avail: Vec<usize> = (0..repairs.len())
            .filter(|&r| repairs[r].is_some())
            .collect();
        if avail.len() < missing.len() {
            return Err(CodecError::Unrecoverable { missing });
        }
        let mut out: Vec<Vec<u8>> = Vec::with_capacity(k);
        if missing.is_empty() {
            out.extend(sources.iter().map(|s| s.unwrap().to_vec()));
            return Ok(out);
        }
        let solved = self.solve_missing(sources, repairs, &missing, &avail[..missing.len()])?;
        let mut solved = solved.into_iter();
        for s in sources {
            match s {
                Some(s) => out.push(s.to_vec()),
                None => out.push(solved.next().expect("one solution per erasure")),
            }
        }
        Ok(out)
    }

    fn solve_missing(
        &self,
        sources: &[Option<&[u8]>],
        repairs: &[Option<&[u8]>],
        missing: &[usize],
        use_repairs: &[usize],
    ) -> Result<Vec<Vec<u8>>, CodecError> {
        let m = missing.len();
        let mut coeffs = Matrix::zeros(m, m);
        let mut rhs = Vec::with_capacity(m);
        for (row, &r) in use_repairs.iter().enumerate() {
            let mut acc = repairs[r].unwrap().to_vec();
            for (j, s) in sources.iter().enumerate() {
                if let Some(s) = s {
                    mul_add_slice(&mut acc, s, self.repair_coef(r, j));
                }
            }
            for (col, &j) in missing.iter().enumerate() {
                coeffs.set(row, col, self.repair_coef(r, j));
            }
            rhs.push(acc);
        }
        solve_linear_system(&coeffs, &rhs).map_err(|_| CodecError::Unrecoverable {
            missing: missing.to_vec(),
        })
    }
}

/// Block encoder; repairs are accumulated as sources arrive.
pub struct RsEncoder {
    code: ReedSolomon,
    symbol_size: usize,
    block_id: u32,
    pos: usize,
    acc: Vec<Vec<u8>>,
}

impl RsEncoder {
    pub fn new(params: BlockCodeParams, symbol_size: usize) -> Result<Self, CodecError> {
        let code = ReedSolomon::new(params)?;
        Ok(RsEncoder {
            acc: vec![vec![0u8; symbol_size]; params.repair_count()],
            code,
            symbol_size,
            block_id: 0,
            pos: 0,
        })
    }
}

impl SchemeEncoder for RsEncoder {
    fn scheme(&self) -> SchemeId {
        SchemeId::ReedSolomon
    }

    fn next_source_id(&self) -> u32 {
        (self.block_id << 8) | self.pos as u32
    }

    fn push_source(&mut self, payload: &[u8]) -> Vec<RepairSymbol> {
        assert!(
            payload.len() <= self.symbol_size,
            "source symbol larger than E"
        );
        for (r, rep) in self.acc.iter_mut().enumerate() {
            let c = self.code.repair_coef(r, self.pos);
            mul_add_slice(&mut rep[..payload.len()], payload, c);
        }
        self.pos += 1;
        let p = self.code.params();
        if self.pos < p.k as usize {
            return Vec::new();
        }
        let fresh = vec![vec![0u8; self.symbol_size]; p.repair_count()];
        let repairs = std::mem::replace(&mut self.acc, fresh);
        let block_id = self.block_id;
        self.block_id += 1;
        self.pos = 0;
        repairs
            .into_iter()
            .enumerate()
            .map(|(r, payload)| RepairSymbol {
                meta: RepairMeta::Block {
                    block_id,
                    index: r as u8,
                    k: p.k,
                    n_minus_k: p.n - p.k,
                    depth: 1,
                },
                payload,
            })
            .collect()
    }
}

struct Block {
    sources: HashMap<usize, Vec<u8>>,
    repairs: HashMap<usize, Vec<u8>>,
    params: Option<BlockCodeParams>,
    done: bool,
}

/// Receiver for the block code. Code parameters come from repair ids.
pub struct RsDecoder {
    blocks: BTreeMap<u32, Block>,
    codes: HashMap<BlockCodeParams, ReedSolomon>,
    keep_blocks: u32,
}

impl RsDecoder {
    pub fn new() -> Self {
        RsDecoder {
            blocks: BTreeMap::new(),
            codes: HashMap::new(),
            keep_blocks: 64,
        }
    }

    fn stale(&self, block_id: u32) -> bool {
        self.blocks
            .last_key_value()
            .is_some_and(|(&newest, _)| block_id + self.keep_blocks < newest)
    }

    fn prune(&mut self, newest: u32) {
        let cutoff = newest.saturating_sub(self.keep_blocks);
        while let Some((&b, _)) = self.blocks.first_key_value() {
            if b >= cutoff {
                break;
            }
            self.blocks.remove(&b);
        }
    }

    fn block(&mut self, id: u32) -> &mut Block {
        self.blocks.entry(id).or_insert_with(|| Block {
            sources: HashMap::new(),
            repairs: HashMap::new(),
            params: None,
            done: false,
        })
    }

    fn try_block(&mut self, block_id: u32) -> Vec<Recovered> {
        let Some(b) = self.blocks.get(&block_id) else {
            return Vec::new();
        };
        let Some(params) = b.params else {
            return Vec::new();
        };
        let k = params.k as usize;
        if b.done || b.sources.len() + b.repairs.len() < k {
            return Vec::new();
        }
        if b.sources.len() >= k {
            self.blocks.get_mut(&block_id).unwrap().done = true;
            return Vec::new();
        }
        let code = match self.codes.get(&params) {
            Some(c) => c,
            None => match ReedSolomon::new(params) {
                Ok(c) => self.codes.entry(params).or_insert(c),
                Err(_) => return Vec::new(),
            },
        };
        let srcs: Vec<Option<&[u8]>> = (0..k)
            .map(|j| b.sources.get(&j).map(Vec::as_slice))
            .collect();
        let reps: Vec<Option<&[u8]>> = (0..params.repair_count())
            .map(|r| b.repairs.get(&r).map(Vec::as_slice))
            .collect();
        let Ok(all) = code.recover(&srcs, &reps) else {
            return Vec::new();
        };
        let missing: Vec<usize> = (0..k).filter(|j| srcs[*j].is_none()).collect();
        let b = self.blocks.get_mut(&block_id).unwrap();
        b.done = true;
        b.repairs.clear();
        let mut out = Vec::with_capacity(missing.len());
        for j in missing {
            b.sources.insert(j, all[j].clone());
            out.push(((block_id << 8) | j as u32, all[j].clone()));
        }
        out
    }
}

impl Default for RsDecoder {
    fn default() -> Self {
        Self::new()
    }
}

impl SchemeDecoder for RsDecoder {
    fn scheme(&self) -> SchemeId {
        SchemeId::ReedSolomon
    }

    fn on_source(&mut self, id: u32, payload: &[u8]) -> Vec<Recovered> {
        let (block_id, pos) = (id >> 8, (id & 0xFF) as usize);
        if self.stale(block_id) {
            return Vec::new();
        }
        let b = self.block(block_id);
        if b.done || b.sources.contains_key(&pos) {
            return Vec::new();
        }
        b.sources.insert(pos, payload.to_vec());
        let out = self.try_block(block_id);
        self.prune(block_id);
        out
    }

    fn on_repair(&mut self, meta: &RepairMeta, payload: &[u8]) -> Vec<Recovered> {
        let RepairMeta::Block {
            block_id,
            index,
            k,
            n_minus_k,
            ..
        } = *meta
        else {
            return Vec::new();
        };
        if self.stale(block_id) {
            return Vec::new();
        }
        let params = BlockCodeParams {
            n: k + n_minus_k,
            k,
        };
        let b = self.block(block_id);
        if b.done || b.repairs.contains_key(&(index as usize)) {
            return Vec::new();
        }
        b.params.get_or_insert(params);
        b.repairs.insert(index as usize, payload.to_vec());
        let out = self.try_block(block_id);
        self.prune(block_id);
        out
    }
}

use crate::error::{Error, Result};
use crate::profile::DropSet;

/// Decision variables for one round: `x[r,i,j]` (device `i` runs block `j`
/// of request `r`) and `y[r,j]` (block `j` of request `r` is kept).
/// All indices are 0-based; block index 0 is the stem, whose keep bit is
/// always set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    requests: usize,
    devices: usize,
    blocks: usize,
    x: Vec<bool>,
    y: Vec<bool>,
}

impl Assignment {
    /// Nothing placed, everything kept.
    pub fn empty(requests: usize, devices: usize, blocks: usize) -> Self {
        Self {
            requests,
            devices,
            blocks,
            x: vec![false; requests * devices * blocks],
            y: vec![true; requests * blocks],
        }
    }

    pub fn from_parts(requests: usize, devices: usize, blocks: usize, x: Vec<bool>, mut y: Vec<bool>) -> Result<Self> {
        if x.len() != requests * devices * blocks {
            return Err(Error::LengthMismatch {
                what: "placement bits",
                expected: requests * devices * blocks,
                got: x.len(),
            });
        }
        if y.len() != requests * blocks {
            return Err(Error::LengthMismatch {
                what: "keep bits",
                expected: requests * blocks,
                got: y.len(),
            });
        }
        for r in 0..requests {
            y[r * blocks] = true;
        }
        Ok(Self {
            requests,
            devices,
            blocks,
            x,
            y,
        })
    }

    /// Resolved assignment from per-request host lists: `hosts[r][j]` is the
    /// device computing block `j`, or `None` when the block is dropped.
    pub fn from_hosts(devices: usize, blocks: usize, hosts: &[Vec<Option<usize>>]) -> Result<Self> {
        let mut a = Self::empty(hosts.len(), devices, blocks);
        for (r, row) in hosts.iter().enumerate() {
            if row.len() != blocks {
                return Err(Error::LengthMismatch {
                    what: "host row",
                    expected: blocks,
                    got: row.len(),
                });
            }
            for (j, host) in row.iter().enumerate() {
                match host {
                    Some(i) if *i < devices => a.set_x(r, *i, j, true),
                    Some(i) => {
                        return Err(Error::LengthMismatch {
                            what: "device index",
                            expected: devices,
                            got: *i,
                        })
                    }
                    None if j == 0 => return Err(Error::StemDropped),
                    None => a.set_keep(r, j, false),
                }
            }
        }
        Ok(a)
    }

    pub fn requests(&self) -> usize {
        self.requests
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    #[inline]
    fn xi(&self, r: usize, i: usize, j: usize) -> usize {
        (r * self.devices + i) * self.blocks + j
    }

    #[inline]
    pub fn x(&self, r: usize, i: usize, j: usize) -> bool {
        self.x[self.xi(r, i, j)]
    }

    pub fn set_x(&mut self, r: usize, i: usize, j: usize, v: bool) {
        let k = self.xi(r, i, j);
        self.x[k] = v;
    }

    #[inline]
    pub fn keep(&self, r: usize, j: usize) -> bool {
        self.y[r * self.blocks + j]
    }

    /// Setting the stem's keep bit to false is ignored.
    pub fn set_keep(&mut self, r: usize, j: usize, v: bool) {
        if j != 0 {
            self.y[r * self.blocks + j] = v;
        }
    }

    pub fn keep_vector(&self, r: usize) -> &[bool] {
        &self.y[r * self.blocks..(r + 1) * self.blocks]
    }

    pub fn drop_set(&self, r: usize) -> DropSet {
        DropSet::from_keep(self.keep_vector(r))
    }

    /// Replaces request `r`'s keep vector with the complement of `drop`.
    pub fn apply_drop_set(&mut self, r: usize, drop: &DropSet) {
        for j in 1..self.blocks {
            self.set_keep(r, j, !drop.contains(j + 1));
        }
    }

    pub fn x_bits(&self) -> &[bool] {
        &self.x
    }

    pub fn y_bits(&self) -> &[bool] {
        &self.y
    }

    /// Devices with `x[r,·,j]` set, ascending.
    pub fn hosts(&self, r: usize, j: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.devices).filter(move |&i| self.x(r, i, j))
    }

    pub fn host_count(&self, r: usize, j: usize) -> usize {
        self.hosts(r, j).count()
    }

    /// The single host of a kept block in a resolved assignment.
    pub fn host(&self, r: usize, j: usize) -> Option<usize> {
        if self.keep(r, j) {
            self.hosts(r, j).next()
        } else {
            None
        }
    }

    /// Every kept block has exactly one host.
    pub fn is_resolved(&self) -> bool {
        (0..self.requests).all(|r| (0..self.blocks).all(|j| !self.keep(r, j) || self.host_count(r, j) == 1))
    }
}

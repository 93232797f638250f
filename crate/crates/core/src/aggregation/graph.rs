use super::{CandidateSet, UnionFind};
use crate::geometry::IouVariant;
use crate::par;

/// Dense symmetric IoU matrix with a unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix {
    n: usize,
    data: Vec<f64>,
}

impl IouMatrix {
    /// Builds from row-major entries. Panics unless the input is square,
    /// symmetric and within `[0, 1]`; the diagonal is overwritten with 1.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "IoU matrix row {i} has the wrong length");
            data.extend_from_slice(row);
        }
        let mut m = Self { n, data };
        for i in 0..n {
            m.data[i * n + i] = 1.0;
            for j in 0..n {
                let v = m.get(i, j);
                assert!((0.0..=1.0).contains(&v), "IoU entry ({i},{j}) = {v} outside [0, 1]");
                assert_eq!(v.to_bits(), m.get(j, i).to_bits(), "IoU matrix is not symmetric at ({i},{j})");
            }
        }
        m
    }

    pub fn from_candidates(cands: &CandidateSet, variant: IouVariant) -> Self {
        let n = cands.len();
        let boxes = cands.boxes();
        let upper = par::map_range(n, |i| {
            ((i + 1)..n)
                .map(|j| variant.compute_unchecked(&boxes[i], &boxes[j]))
                .collect::<Vec<f64>>()
        });
        let mut data = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            data[i * n + i] = 1.0;
            for (k, v) in row.into_iter().enumerate() {
                let j = i + 1 + k;
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Candidates as vertices, pairwise IoU as edge weights, partitioned into
/// connected components.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGraph {
    pub iou: IouMatrix,
    /// Each component's vertices in ascending order; components ordered by
    /// their smallest vertex.
    pub components: Vec<Vec<usize>>,
}

impl BoxGraph {
    /// Connects `i` and `j` whenever their IoU exceeds `min_edge_iou`.
    pub fn from_matrix(iou: IouMatrix, min_edge_iou: f64) -> Self {
        let n = iou.len();
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if iou.get(i, j) > min_edge_iou {
                    uf.union(i, j);
                }
            }
        }
        let components = uf.groups();
        Self { iou, components }
    }

    pub fn component_of(&self, v: usize) -> Option<usize> {
        self.components.iter().position(|c| c.contains(&v))
    }
}

/// Graph with an edge for every strictly positive IoU.
pub fn build_graph(cands: &CandidateSet, variant: IouVariant) -> BoxGraph {
    build_graph_with_threshold(cands, variant, 0.0)
}

pub fn build_graph_with_threshold(cands: &CandidateSet, variant: IouVariant, min_edge_iou: f64) -> BoxGraph {
    BoxGraph::from_matrix(IouMatrix::from_candidates(cands, variant), min_edge_iou)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::AgentId;
    use crate::geometry::Box3D;

    fn cands(xs: &[f64]) -> CandidateSet {
        let boxes = xs
            .iter()
            .map(|&x| Box3D::new(x, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, "f".into()).unwrap())
            .collect::<Vec<_>>();
        let n = boxes.len();
        CandidateSet::from_agent(boxes, vec![0.5; n], &AgentId::new("a")).unwrap()
    }

    #[test]
    fn disjoint_boxes_are_singletons() {
        let g = build_graph(&cands(&[0.0, 5.0]), IouVariant::ThreeD);
        assert_eq!(g.components, vec![vec![0], vec![1]]);
        assert_eq!(g.iou.get(0, 0), 1.0);
        assert_eq!(g.iou.get(0, 1), 0.0);
    }

    #[test]
    fn chains_are_transitive() {
        // a-b overlap, b-c overlap, a-c disjoint
        let g = build_graph(&cands(&[0.0, 0.8, 1.6]), IouVariant::Bev);
        assert_eq!(g.iou.get(0, 2), 0.0);
        assert!(g.iou.get(0, 1) > 0.0 && g.iou.get(1, 2) > 0.0);
        assert_eq!(g.components, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn identical_boxes_form_one_component() {
        let g = build_graph(&cands(&[2.0; 4]), IouVariant::ThreeD);
        assert_eq!(g.components, vec![vec![0, 1, 2, 3]]);
        for i in 0..4 {
            for j in 0..4 {
                assert!((g.iou.get(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn threshold_cuts_weak_edges() {
        let c = cands(&[0.0, 0.9]);
        let g = build_graph_with_threshold(&c, IouVariant::Bev, 0.1);
        assert_eq!(g.components.len(), 2);
        assert!(build_graph(&c, IouVariant::Bev).components.len() == 1);
    }

    #[test]
    fn empty_graph() {
        let g = build_graph(&CandidateSet::empty(), IouVariant::ThreeD);
        assert!(g.iou.is_empty());
        assert!(g.components.is_empty());
    }

    #[test]
    #[should_panic(expected = "not symmetric")]
    fn asymmetric_matrix_panics() {
        IouMatrix::from_rows(&[vec![1.0, 0.2], vec![0.3, 1.0]]);
    }
}

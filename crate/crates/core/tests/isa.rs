use pimdb::crossbar::{Crossbar, CrossbarGeometry, EnergyModel, MicroOp};
use pimdb::isa::{cost_of, expand, Field, Opcode, PimInstruction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field_value(x: &Crossbar, row: usize, f: Field) -> u128 {
    (0..f.len as usize).fold(0u128, |acc, i| {
        acc | (x.peek(row, f.start as usize + i) as u128) << i
    })
}

fn store(x: &mut Crossbar, row: usize, f: Field, v: u128) {
    for i in 0..f.len as usize {
        x.poke(row, f.start as usize + i, (v >> i) & 1 == 1);
    }
}

fn randomize(x: &mut Crossbar, rng: &mut ChaCha8Rng) {
    let g = *x.geometry();
    for r in 0..g.rows {
        for c in 0..g.cols {
            x.poke(r, c, rng.gen());
        }
    }
}

fn mask(bits: usize) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        (1u128 << bits) - 1
    }
}

/// Runs `instr` and returns the crossbar before and after.
fn run(instr: &PimInstruction, x: &mut Crossbar) -> Crossbar {
    let before = x.clone();
    let ops = expand(instr, x.geometry()).unwrap();
    x.apply_all(&ops, &EnergyModel::default()).unwrap();
    before
}

/// Columns outside the destination and compute region are untouched.
fn assert_frame(before: &Crossbar, after: &Crossbar, instr: &PimInstruction) {
    let g = after.geometry();
    let dst = instr.dst_field(g);
    for c in 0..g.cols {
        if dst.contains(c) || instr.compute.contains(c) {
            continue;
        }
        assert_eq!(
            before.column_words(c),
            after.column_words(c),
            "column {c} clobbered by {instr:?}"
        );
    }
}

/// One-bit oracle per column-wise comparison or arithmetic instruction.
fn oracle(op: Opcode, a: u128, b: u128, imm: u128, n: usize, m: usize) -> u128 {
    match op {
        Opcode::EqualImm => (a == imm) as u128,
        Opcode::NotEqualImm => (a != imm) as u128,
        Opcode::LessThanImm => (a < imm) as u128,
        Opcode::GreaterThanImm => (a > imm) as u128,
        Opcode::AddImm => (a + imm) & mask(n),
        Opcode::Equal => (a == b) as u128,
        Opcode::LessThan => (a < b) as u128,
        Opcode::BitwiseNot => !a & mask(n),
        Opcode::BitwiseAnd => a & b,
        Opcode::BitwiseOr => a | b,
        Opcode::Add => (a + b) & mask(n.max(m)),
        Opcode::Multiply => a * b,
        _ => unreachable!(),
    }
}

struct Case {
    op: Opcode,
    n: usize,
    m: usize,
}

fn build(case: &Case, imm: u64) -> PimInstruction {
    let a = Field::new(0, case.n as u16);
    let b = Field::new(case.n as u16, case.m as u16);
    let dst = (case.n + case.m) as u16;
    let mut i = PimInstruction::new(case.op, a).with_dst(dst);
    if case.op.descriptor().has_src2 {
        i = i.with_src2(b);
    }
    if case.op.is_immediate() {
        let len = if case.op == Opcode::AddImm {
            case.m
        } else {
            case.n
        };
        i = i.with_imm(imm, len as u8);
    }
    let g = CrossbarGeometry::new(64, 256, 4).unwrap();
    let start = dst as usize + i.dst_width(&g);
    i.with_compute(Field::new(start as u16, 10))
}

/// Places every (a, b, imm) combination of the given widths into rows of
/// tall crossbars and checks each row; returns the number of checks.
fn exhaustive(case: &Case) -> usize {
    let imm_space = if case.op.is_immediate() {
        1usize
            << if case.op == Opcode::AddImm {
                case.m
            } else {
                case.n
            }
    } else {
        1
    };
    let b_space = if case.op.descriptor().has_src2 {
        1usize << case.m
    } else {
        1
    };
    let a_space = 1usize << case.n;
    let rows = (a_space * b_space).next_power_of_two().max(2);
    let g = CrossbarGeometry::new(rows, 64, 4).unwrap();
    let mut checks = 0;
    for imm in 0..imm_space as u64 {
        let instr = build(case, imm);
        let mut x = Crossbar::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(imm);
        randomize(&mut x, &mut rng);
        for r in 0..rows {
            let (av, bv) = ((r % a_space) as u128, ((r / a_space) % b_space) as u128);
            store(&mut x, r, instr.src1, av);
            if let Some(f) = instr.src2 {
                store(&mut x, r, f, bv);
            }
        }
        let before = run(&instr, &mut x);
        let dst = instr.dst_field(&g);
        for r in 0..rows {
            let (av, bv) = (
                field_value(&before, r, instr.src1),
                instr.src2.map_or(0, |f| field_value(&before, r, f)),
            );
            let want = oracle(case.op, av, bv, imm as u128, case.n, case.m);
            assert_eq!(
                field_value(&x, r, dst),
                want,
                "{:?} a={av} b={bv} imm={imm}",
                case.op
            );
            checks += 1;
        }
        assert_frame(&before, &x, &instr);
    }
    checks
}

#[test]
fn exhaustive_small_widths() {
    use Opcode::*;
    let mut total = 0;
    for n in 1..=8 {
        for op in [
            EqualImm,
            NotEqualImm,
            LessThanImm,
            GreaterThanImm,
            Equal,
            LessThan,
            Add,
            AddImm,
            BitwiseAnd,
            BitwiseOr,
            BitwiseNot,
        ] {
            total += exhaustive(&Case { op, n, m: n });
        }
    }
    for n in 1..=4 {
        for m in 1..=4 {
            total += exhaustive(&Case { op: Multiply, n, m });
            total += exhaustive(&Case { op: Add, n, m });
            total += exhaustive(&Case { op: Equal, n, m });
            total += exhaustive(&Case { op: LessThan, n, m });
            total += exhaustive(&Case {
                op: AddImm,
                n: n.max(m),
                m,
            });
        }
    }
    assert!(total > 500_000, "{total}");
}

#[test]
fn random_wide_operands() {
    use Opcode::*;
    let g = CrossbarGeometry::new(128, 256, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for op in [
        EqualImm,
        NotEqualImm,
        LessThanImm,
        GreaterThanImm,
        Equal,
        LessThan,
        Add,
        AddImm,
        BitwiseAnd,
        BitwiseOr,
        BitwiseNot,
        Multiply,
    ] {
        for trial in 0..20 {
            let n = rng.gen_range(9..=32);
            let m = if op == Multiply {
                rng.gen_range(1..=32)
            } else {
                n
            };
            let imm = rng.gen::<u64>() & mask(n) as u64;
            let instr = build(&Case { op, n, m }, imm);
            let mut x = Crossbar::new(g);
            randomize(&mut x, &mut rng);
            // Make equality and near-misses likely.
            for r in (0..g.rows).step_by(3) {
                store(&mut x, r, instr.src1, imm as u128);
            }
            let before = run(&instr, &mut x);
            let dst = instr.dst_field(&g);
            for r in 0..g.rows {
                let av = field_value(&before, r, instr.src1);
                let bv = instr.src2.map_or(0, |f| field_value(&before, r, f));
                assert_eq!(
                    field_value(&x, r, dst),
                    oracle(op, av, bv, imm as u128, n, m),
                    "{op:?} trial {trial}"
                );
            }
            assert_frame(&before, &x, &instr);
        }
    }
}

#[test]
fn in_place_add_and_bitwise() {
    let g = CrossbarGeometry::new(256, 64, 4).unwrap();
    for op in [Opcode::Add, Opcode::BitwiseAnd, Opcode::BitwiseOr] {
        let instr = PimInstruction::new(op, Field::new(0, 4))
            .with_src2(Field::new(4, 4))
            .with_dst(0)
            .with_compute(Field::new(8, 6));
        let mut x = Crossbar::new(g);
        for r in 0..256 {
            store(&mut x, r, instr.src1, (r % 16) as u128);
            store(&mut x, r, Field::new(4, 4), (r / 16) as u128);
        }
        run(&instr, &mut x);
        for r in 0..256 {
            let want = oracle(op, (r % 16) as u128, (r / 16) as u128, 0, 4, 4) & 0xF;
            assert_eq!(field_value(&x, r, Field::new(0, 4)), want);
        }
    }
}

#[test]
fn add_carry_lands_after_destination() {
    // With the compute region right after the destination, the carry cell
    // extends the sum by one bit.
    let g = CrossbarGeometry::new(256, 64, 4).unwrap();
    let instr = PimInstruction::new(Opcode::Add, Field::new(0, 4))
        .with_src2(Field::new(4, 4))
        .with_dst(8)
        .with_compute(Field::new(12, 5));
    let mut x = Crossbar::new(g);
    for r in 0..256 {
        store(&mut x, r, instr.src1, (r % 16) as u128);
        store(&mut x, r, Field::new(4, 4), (r / 16) as u128);
    }
    run(&instr, &mut x);
    for r in 0..256 {
        assert_eq!(
            field_value(&x, r, Field::new(8, 5)),
            (r % 16 + r / 16) as u128
        );
    }
}

#[test]
fn equal_imm_examples() {
    let g = CrossbarGeometry::new(2, 16, 4).unwrap();
    let instr = PimInstruction::new(Opcode::EqualImm, Field::new(0, 4))
        .with_imm(0b1010, 4)
        .with_dst(4)
        .with_compute(Field::new(5, 1));
    let mut x = Crossbar::new(g);
    store(&mut x, 0, instr.src1, 0b1010);
    store(&mut x, 1, instr.src1, 0b1011);
    run(&instr, &mut x);
    assert!(x.peek(0, 4));
    assert!(!x.peek(1, 4));

    let instr = PimInstruction::new(Opcode::EqualImm, Field::new(0, 3))
        .with_imm(0b101, 3)
        .with_dst(4)
        .with_compute(Field::new(5, 1));
    let mut x = Crossbar::new(g);
    store(&mut x, 0, instr.src1, 0b111);
    run(&instr, &mut x);
    assert!(!x.peek(0, 4));
}

#[test]
fn bitwise_not_example() {
    let instr = PimInstruction::new(Opcode::BitwiseNot, Field::new(0, 3)).with_dst(3);
    let g = CrossbarGeometry::new(8, 8, 4).unwrap();
    assert_eq!(expand(&instr, &g).unwrap().len(), 6);
}

#[test]
fn add_example() {
    let instr = PimInstruction::new(Opcode::Add, Field::new(0, 4))
        .with_src2(Field::new(4, 4))
        .with_dst(8)
        .with_compute(Field::new(12, 5));
    let g = CrossbarGeometry::new(4, 32, 4).unwrap();
    let mut x = Crossbar::new(g);
    store(&mut x, 0, instr.src1, 5);
    store(&mut x, 0, Field::new(4, 4), 9);
    store(&mut x, 1, instr.src1, 9);
    store(&mut x, 1, Field::new(4, 4), 9);
    run(&instr, &mut x);
    assert_eq!(field_value(&x, 0, Field::new(8, 4)), 14);
    assert_eq!(field_value(&x, 1, Field::new(8, 4)), 2);
}

fn reduce_instr(op: Opcode, n: u16, g: &CrossbarGeometry, root: u32) -> PimInstruction {
    let levels = g.rows.trailing_zeros() as u16;
    let dst_w = if op == Opcode::ReduceSum {
        n + levels
    } else {
        n
    };
    PimInstruction::new(op, Field::new(0, n))
        .with_dst(n)
        .with_dst_row(root)
        .with_compute(Field::new(n + dst_w, 9))
}

#[test]
fn reduce_examples() {
    let g = CrossbarGeometry::new(4, 32, 4).unwrap();
    let mut x = Crossbar::new(g);
    for (r, v) in [3u128, 0, 5, 1].into_iter().enumerate() {
        store(&mut x, r, Field::new(0, 4), v);
    }
    let instr = reduce_instr(Opcode::ReduceSum, 4, &g, 0);
    run(&instr, &mut x);
    assert_eq!(field_value(&x, 0, instr.dst_field(&g)), 9);

    let g = CrossbarGeometry::default();
    let mut x = Crossbar::new(g);
    for r in 0..1024 {
        store(&mut x, r, Field::new(0, 1), 1);
    }
    let instr = reduce_instr(Opcode::ReduceSum, 1, &g, 0);
    let ops = expand(&instr, &g).unwrap();
    x.apply_all(&ops, &EnergyModel::default()).unwrap();
    assert_eq!(field_value(&x, 0, instr.dst_field(&g)), 1024);
    // One reduce step per tree level: each level starts by clearing the carry.
    let carry = instr.compute.start as u32;
    let levels = ops
        .iter()
        .filter(|op| **op == MicroOp::ColReset { col: carry })
        .count();
    assert_eq!(levels, 10);
}

#[test]
fn reduce_random_against_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for rows in [2usize, 8, 32, 64] {
        let g = CrossbarGeometry::new(rows, 64, 4).unwrap();
        for op in [Opcode::ReduceSum, Opcode::ReduceMin, Opcode::ReduceMax] {
            for _ in 0..30 {
                let n = rng.gen_range(1..=8u16);
                let root = rng.gen_range(0..rows as u32);
                let instr = reduce_instr(op, n, &g, root);
                let mut x = Crossbar::new(g);
                randomize(&mut x, &mut rng);
                let vals: Vec<u128> = (0..rows).map(|r| field_value(&x, r, instr.src1)).collect();
                let before = run(&instr, &mut x);
                let want = match op {
                    Opcode::ReduceSum => vals.iter().sum(),
                    Opcode::ReduceMin => *vals.iter().min().unwrap(),
                    _ => *vals.iter().max().unwrap(),
                };
                assert_eq!(
                    field_value(&x, root as usize, instr.dst_field(&g)),
                    want,
                    "{op:?} rows={rows} n={n}"
                );
                assert_frame(&before, &x, &instr);
            }
        }
    }
}

fn transform_check(
    g: CrossbarGeometry,
    dst_col: u16,
    dst_row: u32,
    src: u16,
    rng: &mut ChaCha8Rng,
) {
    let instr = PimInstruction::new(Opcode::ColumnTransform, Field::new(src, 1))
        .with_dst(dst_col)
        .with_dst_row(dst_row);
    let mut x = Crossbar::new(g);
    randomize(&mut x, rng);
    let before = run(&instr, &mut x);
    let w = g.read_width;
    for s in 0..g.rows {
        let (j, i) = (s / w, s % w);
        assert_eq!(
            x.peek(dst_row as usize + j, dst_col as usize + i),
            before.peek(s, src as usize),
            "source row {s} geometry {g:?} dst ({dst_row},{dst_col})"
        );
    }
    assert_frame(&before, &x, &instr);
}

#[test]
fn column_transform_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Small crossbar with 8 rows, read width 4: two destination rows.
    transform_check(CrossbarGeometry::new(8, 8, 4).unwrap(), 0, 0, 6, &mut rng);
    transform_check(CrossbarGeometry::new(8, 8, 4).unwrap(), 2, 3, 0, &mut rng);
    transform_check(CrossbarGeometry::default(), 100, 0, 7, &mut rng);
    for _ in 0..200 {
        let rows = [8usize, 16, 32, 64][rng.gen_range(0..4)];
        let w = [2usize, 4, 8][rng.gen_range(0..3)];
        let g = CrossbarGeometry::new(rows, 32, w).unwrap();
        let dst_row = rng.gen_range(0..=(rows - rows / w)) as u32;
        transform_check(g, 16, dst_row, rng.gen_range(0..16), &mut rng);
    }
}

#[test]
fn column_transform_zero_column() {
    let g = CrossbarGeometry::new(8, 8, 4).unwrap();
    let instr = PimInstruction::new(Opcode::ColumnTransform, Field::new(6, 1)).with_dst(0);
    let mut x = Crossbar::new(g);
    run(&instr, &mut x);
    for r in 0..2 {
        for c in 0..4 {
            assert!(!x.peek(r, c));
        }
    }
}

#[test]
fn default_geometry_costs_near_table() {
    let g = CrossbarGeometry::default();
    let ct = PimInstruction::new(Opcode::ColumnTransform, Field::new(0, 1)).with_dst(16);
    let c = cost_of(&ct, &g).unwrap();
    assert_eq!(c.table_cycles, Some(2050));
    assert!(c.deviation().unwrap().abs() <= 0.2);
}

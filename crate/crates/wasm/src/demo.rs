use std::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use espoon::clients::{encrypt_policy, pe_attributes_enc, pe_sat_enc, Kma, Role};
use espoon::codec::encode_hex;
use espoon::crypto::{
    client_encrypt_raw, combine, gen_trapdoor_raw, init, keygen_with_share, match_test,
    server_reencrypt, setup_with_secret, GroupParams, PrfKey, SecurityProfile, Sigma,
};
use espoon::lang::{parse_attributes, parse_policy};
use espoon::policy::{expand_attributes, ConditionNode, SatTuple};
use espoon::service::ServiceProvider;
use espoon::Token;

fn gate_label(k: usize, c: usize) -> String {
    match k {
        _ if k == c => "AND".into(),
        1 => "OR".into(),
        _ => format!("{k} OF {c}"),
    }
}

fn render_tree(node: &ConditionNode<Token>, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    match node {
        ConditionNode::Leaf(t) => writeln!(out, "{pad}{t}").unwrap(),
        ConditionNode::Gate {
            threshold,
            children,
        } => {
            writeln!(out, "{pad}{}", gate_label(*threshold, children.len())).unwrap();
            for c in children {
                render_tree(c, depth + 1, out);
            }
        }
    }
}

pub fn compile_policy(text: &str) -> Result<String, String> {
    let ast = parse_policy(text).map_err(|e| e.to_string())?;
    let tree = ast.compile().map_err(|e| e.to_string())?;
    let [s, a, t] = ast.sat.items();
    let mut out = format!("tuple <{s}, {a}, {t}>\n");
    render_tree(&tree, 0, &mut out);
    write!(
        out,
        "{} leaves, {} gates, depth {}",
        tree.leaf_count(),
        tree.node_count() - tree.leaf_count(),
        tree.depth()
    )
    .unwrap();
    Ok(out)
}

pub fn evaluate_request(
    policy: &str,
    sat: [&str; 3],
    attributes: &str,
    seed: u64,
) -> Result<String, String> {
    let ast = parse_policy(policy).map_err(|e| format!("policy {e}"))?;
    let tree = ast.compile().map_err(|e| e.to_string())?;
    let attrs = parse_attributes(attributes).map_err(|e| format!("attributes {e}"))?;
    let request = SatTuple::new(sat[0], sat[1], sat[2]).map_err(|e| e.to_string())?;

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (params, msk) = init(SecurityProfile::Production, &mut rng).map_err(|e| e.to_string())?;
    let mut kma = Kma::new(params.clone(), msk);
    let mut sp = ServiceProvider::in_memory(params.clone());
    let mut issue = |id: &str, role| {
        let reg = kma.register(id, role, &mut rng).map_err(|e| e.to_string())?;
        sp.register_server_key(reg.server_key).map_err(|e| e.to_string())?;
        Ok::<_, String>(reg.user_key)
    };
    let admin = issue("admin", Role::Admin)?;
    let requester = issue("requester", Role::Requester)?;
    let pip = issue("pip", Role::Pip)?;

    let bundle = encrypt_policy(&params, &ast.sat, &tree, &admin, &mut rng);
    let id = sp.ap_deploy(&bundle).map_err(|e| e.to_string())?;
    let req = pe_sat_enc(&params, &request, &requester, &mut rng);
    let enc = pe_attributes_enc(&params, &attrs, &pip, &mut rng).map_err(|e| e.to_string())?;
    let decision = sp.pep_handle(&req, &enc);

    let record = sp.policy_store().get(id).expect("just deployed");
    let first = record.condition.leaves()[0];
    let tokens = expand_attributes(&attrs).map_err(|e| e.to_string())?;
    let mut out = String::new();
    writeln!(out, "decision: {decision}").unwrap();
    writeln!(out, "encrypted leaves stored: {}", record.condition.leaf_count()).unwrap();
    writeln!(out, "attribute tokens: {}", tokens.len()).unwrap();
    for t in &tokens {
        writeln!(out, "  {t}").unwrap();
    }
    writeln!(
        out,
        "tuple matches: {}",
        sp.pdp_sat_search(&req).map(|m| m.len()).unwrap_or(0)
    )
    .unwrap();
    let c1 = encode_hex(&params.encode_element(&first.c1));
    write!(out, "first leaf as stored: c1={}... c2={}", &c1[..32], encode_hex(&first.c2)).unwrap();
    Ok(out)
}

pub fn tiny_trace() -> String {
    let n = |v: u32| v.into();
    let group = GroupParams::tiny();
    let prf = PrfKey::new(vec![7; 32]).expect("non-empty key");
    let (params, msk) = setup_with_secret(group, n(7), prf).expect("valid tiny setup");
    let (uk, sk) = keygen_with_share(&params, &msk, "demo", n(4)).expect("valid share");
    let sigma = Sigma::from_exponent(&params, n(3));
    let ct = client_encrypt_raw(&params, &uk, &sigma, &n(5));
    let sct = server_reencrypt(&params, &sk, &ct);
    let td = gen_trapdoor_raw(&params, &uk, &sigma, &n(2));
    let t = combine(&params, &sk, &td);
    let rows = [
        ("p q g", format!("{} {} {}", params.p(), params.q(), params.g())),
        ("x = x1 + x2", format!("7 = {} + {}", uk.x1(), sk.x2())),
        ("h = g^x", params.h().to_string()),
        ("sigma, r, r'", "3, 5, 2".into()),
        ("c1hat = g^(r+sigma)", ct.c1hat.to_string()),
        ("c2hat = c1hat^x1", ct.c2hat.to_string()),
        ("c3hat = H(h^r)", encode_hex(&ct.c3hat)[..16].to_string() + "..."),
        ("c1 = c1hat^x2 * c2hat", sct.c1.to_string()),
        ("t1 = g^(sigma-r')", td.t1.to_string()),
        ("t2 = h^r' * g^(x1(sigma-r'))", td.t2.to_string()),
        ("T = t1^x2 * t2", t.value().to_string()),
        ("c2 == H(c1 / T)", match_test(&params, &sct, &t).to_string()),
    ];
    rows.iter()
        .map(|(k, v)| format!("{k:<30}{v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

from .extract import extract_api_usages, extract_file, parse_imports, split_methods
from .io import (builtin_manifests, load_manifest, load_manifest_dir, load_scenario, read_jsonl,
                 save_manifest, save_scenario, write_jsonl)
from .lexer import JAVA_KEYWORDS, LexError, lex_java
from .pipeline import (CROSS_SPLIT_DUPLICATE, DOMAIN_API_IN_ID, MULTI_DOMAIN, WRONG_DOMAIN, assign_domains,
                       build_scenario, carve_validation, dedup, leakage_check, split_id, split_ood)
from .synthetic import SyntheticConfig, gen_synthetic
from .types import ApiSite, DomainSpec, MethodSample, ScenarioData, SplitSet, content_hash

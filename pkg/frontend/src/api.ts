/** Typed client for the caseguide evidence service JSON API. */

export interface Toggles {
  use_patients: boolean;
  use_guidelines: boolean;
}

export interface ConceptRef {
  concept_id: string;
  category: string;
}

export type SaliencyLevel = "none" | "important" | "highly_important";

export interface SaliencyEntry {
  concept_id: string;
  score: number;
  level: SaliencyLevel;
}

export interface HighlightSpan {
  section: string;
  start: number;
  end: number;
  surface: string;
  concept_id: string;
  category: string;
  score: number;
  level: SaliencyLevel;
}

export interface PatientHit {
  case_id: string;
  hybrid: number;
  kw: number;
  sem: number;
  matched_concepts: ConceptRef[];
  sections: { s: string; o: string; a: string; p: string };
  saliency: SaliencyEntry[];
  highlights: HighlightSpan[];
}

export interface UnitRef {
  unit_id: string;
  doc_id: string;
  authority: string;
  section_path: string[];
  char_start: number;
  char_end: number;
  text: string;
}

export interface RelationFinding {
  edge_id: string;
  src: string;
  dst: string;
  relation: string;
  qualifiers: Record<string, string>;
  units: UnitRef[];
}

export interface GuidelineHit {
  community_id: number;
  score: number;
  sem: number;
  overlap: number;
  summary: string;
  matched_concepts: ConceptRef[];
  support: UnitRef[];
  relations: RelationFinding[];
}

export interface RetrievePayload {
  query_id: string;
  toggles: Toggles;
  patient_hits: PatientHit[];
  guideline_hits: GuidelineHit[];
}

export interface Citation {
  marker: string;
  kind: "patient" | "guideline";
  ref: Record<string, unknown>;
}

export interface QaPayload {
  answer: string;
  prompt_echo: string;
  citations: Citation[];
}

export interface ProvenancePayload {
  doc_id: string;
  section_path: string[];
  text: string;
}

export interface RetrieveRequest extends Toggles {
  k_patients?: number;
  k_communities?: number;
}

export interface QaRequest extends Toggles {
  question: string;
  k_patients?: number;
  k_communities?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
    public detail?: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<never> {
  let code = "error";
  let message = `HTTP ${response.status}`;
  let detail: string | undefined;
  try {
    const body = await response.json();
    code = body.code ?? code;
    message = body.message ?? message;
    detail = body.detail ?? undefined;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, code, message, detail);
}

export class ApiClient {
  constructor(public baseUrl: string = "") {}

  private async post<T>(
    path: string,
    body: unknown,
    signal?: AbortSignal,
  ): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!response.ok) await parseError(response);
    return response.json() as Promise<T>;
  }

  async lockCase(caseText: string): Promise<string> {
    const payload = await this.post<{ session_id: string }>("/sessions", {
      case_text: caseText,
    });
    return payload.session_id;
  }

  retrieve(
    sessionId: string,
    request: RetrieveRequest,
    signal?: AbortSignal,
  ): Promise<RetrievePayload> {
    return this.post(`/sessions/${sessionId}/retrieve`, request, signal);
  }

  qa(
    sessionId: string,
    request: QaRequest,
    signal?: AbortSignal,
  ): Promise<QaPayload> {
    return this.post(`/sessions/${sessionId}/qa`, request, signal);
  }

  async provenance(unitId: string): Promise<ProvenancePayload> {
    const response = await fetch(
      `${this.baseUrl}/provenance/${encodeURIComponent(unitId)}`,
    );
    if (!response.ok) await parseError(response);
    return response.json() as Promise<ProvenancePayload>;
  }
}

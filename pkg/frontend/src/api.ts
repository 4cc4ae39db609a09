import type {
    AlignmentFile,
    PointPair,
    SetRecord,
    TransformDict,
    TransformResponse,
} from "./types.js";

export class ApiError extends Error {
    constructor(message: string, readonly status: number) {
        super(message);
        this.name = "ApiError";
    }
}

export class NotFoundError extends ApiError {
    constructor(message: string) {
        super(message, 404);
        this.name = "NotFoundError";
    }
}

export class RevisionConflictError extends ApiError {
    constructor(message: string, readonly currentRevision: number) {
        super(message, 409);
        this.name = "RevisionConflictError";
    }
}

export class ValidationError extends ApiError {
    constructor(message: string, readonly invariant: string) {
        super(message, 422);
        this.name = "ValidationError";
    }
}

export function pairsToWire(pairs: PointPair[]): AlignmentFile["pairs"] {
    return pairs.map((p) => ({
        source: [p.source.x, p.source.y] as [number, number],
        target: [p.target.x, p.target.y] as [number, number],
    }));
}

export function pairsFromWire(wire: AlignmentFile["pairs"]): PointPair[] {
    return wire.map((p) => ({
        source: { x: p.source[0], y: p.source[1] },
        target: { x: p.target[0], y: p.target[1] },
    }));
}

export function bytesToBase64(bytes: Uint8Array): string {
    let binary = "";
    const chunk = 0x8000;
    for (let i = 0; i < bytes.length; i += chunk) {
        binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
    }
    return btoa(binary);
}

async function raiseForStatus(response: Response): Promise<void> {
    if (response.ok) return;
    let payload: Record<string, unknown> = {};
    try {
        payload = (await response.json()) as Record<string, unknown>;
    } catch {
        // non-JSON error body; fall through with the status alone
    }
    const detail = typeof payload.detail === "string" ? payload.detail : response.statusText;
    if (response.status === 404) throw new NotFoundError(detail);
    if (response.status === 409) {
        throw new RevisionConflictError(detail, Number(payload.current_revision ?? -1));
    }
    if (response.status === 422) {
        throw new ValidationError(detail, String(payload.invariant ?? "unknown"));
    }
    throw new ApiError(detail, response.status);
}

/** Typed client for the sync service; geometry always comes from the server. */
export class ApiClient {
    constructor(
        private readonly baseUrl: string = "",
        private readonly fetchFn: typeof fetch = fetch,
    ) {}

    fileUrl(setId: string, name: string): string {
        return `${this.baseUrl}/api/sets/${encodeURIComponent(setId)}/${name}`;
    }

    async listSets(): Promise<SetRecord[]> {
        const response = await this.fetchFn(`${this.baseUrl}/api/sets`);
        await raiseForStatus(response);
        return (await response.json()) as SetRecord[];
    }

    async fetchFile(setId: string, name: string): Promise<Uint8Array> {
        const response = await this.fetchFn(this.fileUrl(setId, name));
        await raiseForStatus(response);
        return new Uint8Array(await response.arrayBuffer());
    }

    async fetchRecord(setId: string): Promise<SetRecord> {
        const response = await this.fetchFn(this.fileUrl(setId, "manifest.json"));
        await raiseForStatus(response);
        return (await response.json()) as SetRecord;
    }

    async fetchAlignment(setId: string): Promise<AlignmentFile> {
        const response = await this.fetchFn(this.fileUrl(setId, "alignment.json"));
        await raiseForStatus(response);
        return (await response.json()) as AlignmentFile;
    }

    async computeTransform(setId: string, pairs: PointPair[]): Promise<TransformResponse> {
        const response = await this.fetchFn(
            `${this.baseUrl}/api/sets/${encodeURIComponent(setId)}/transform`,
            {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify({ pairs: pairsToWire(pairs) }),
            },
        );
        await raiseForStatus(response);
        return (await response.json()) as TransformResponse;
    }

    async saveAnnotation(
        setId: string,
        maskBytes: Uint8Array,
        transform: TransformDict,
        pairs: PointPair[],
        expectedRevision: number,
    ): Promise<SetRecord> {
        const url =
            `${this.baseUrl}/api/sets/${encodeURIComponent(setId)}/annotation` +
            `?expected_revision=${expectedRevision}`;
        const response = await this.fetchFn(url, {
            method: "PUT",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({
                mask_b64: bytesToBase64(maskBytes),
                transform,
                pairs: pairsToWire(pairs),
            }),
        });
        await raiseForStatus(response);
        return (await response.json()) as SetRecord;
    }
}

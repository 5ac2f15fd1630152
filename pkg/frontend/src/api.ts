/**
 * Typed client for the reader-study HTTP endpoints.
 *
 * The server is the single source of truth: it hands out one item at a time,
 * accepts exactly one verdict per item, and answers 409 when a verdict is a
 * duplicate or out of order. The client distinguishes those two conflicts so
 * the session controller can silently advance after a retried submit but warn
 * when another tab has taken the session over.
 */

export interface ReviewItem {
  done: false;
  item_id: string;
  index: number;
  total: number;
  image_url: string;
}

export interface SessionDone {
  done: true;
  total: number;
  submitted: number;
}

export type NextResponse = ReviewItem | SessionDone;

export type Verdict = 'real' | 'fake';

export type SubmitResult = 'stored' | 'duplicate' | 'out-of-order';

export class EnrollmentError extends Error {
  constructor(reviewerId: string) {
    super(`reviewer "${reviewerId}" is not enrolled`);
    this.name = 'EnrollmentError';
  }
}

export class StudyApi {
  private readonly fetchFn: typeof fetch;

  constructor(private readonly baseUrl = '', fetchFn?: typeof fetch) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async fetchNext(reviewerId: string): Promise<NextResponse> {
    const url = `${this.baseUrl}/api/session/${encodeURIComponent(reviewerId)}/next`;
    const response = await this.fetchFn(url);
    if (response.status === 404) {
      throw new EnrollmentError(reviewerId);
    }
    if (!response.ok) {
      throw new Error(`fetching the next item failed with status ${response.status}`);
    }
    return (await response.json()) as NextResponse;
  }

  async submitVerdict(
    reviewerId: string,
    itemId: string,
    verdict: Verdict,
  ): Promise<SubmitResult> {
    const url = `${this.baseUrl}/api/session/${encodeURIComponent(reviewerId)}/judgment`;
    const response = await this.fetchFn(url, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ item_id: itemId, verdict }),
    });
    if (response.status === 204) {
      return 'stored';
    }
    if (response.status === 404) {
      throw new EnrollmentError(reviewerId);
    }
    if (response.status === 409) {
      const detail = await conflictDetail(response);
      return detail.includes('duplicate') ? 'duplicate' : 'out-of-order';
    }
    throw new Error(`submitting the verdict failed with status ${response.status}`);
  }
}

async function conflictDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? '';
  } catch {
    return '';
  }
}
